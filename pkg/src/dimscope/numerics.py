"""Deterministic numerical kernels used by every estimator.

All neighbour searches are exhaustive and exact. Ties in distance are broken
by ascending sample index, so results never depend on evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import NumericalError, PointSet, ValidationError

SYMMETRY_TOL = 1e-12
NEG_EIG_TOL = 1e-12


@dataclass(frozen=True)
class Spectrum:
    values: np.ndarray
    source_shape: tuple[int, int]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.size > 1 and np.any(np.diff(values) > 0):
            raise ValidationError("spectrum values must be non-increasing")
        if np.any(values < 0):
            raise ValidationError("spectrum values must be non-negative")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size


def _check_finite(M, what):
    M = np.asarray(M, dtype=np.float64)
    if not np.isfinite(M).all():
        raise ValidationError(f"{what} contains non-finite entries")
    return M


def singular_values(M) -> Spectrum:
    """Singular values of a ``d x K`` matrix in descending order (LAPACK gesdd)."""
    M = _check_finite(M, "matrix")
    if M.ndim != 2 or 0 in M.shape:
        raise ValidationError(f"expected a non-empty 2-D matrix, got shape {M.shape}")
    s = np.linalg.svd(M, compute_uv=False)
    return Spectrum(np.sort(s)[::-1], M.shape)


def sym_eigenvalues(C) -> Spectrum:
    """Descending eigenvalues of a symmetric PSD matrix.

    Negative eigenvalues within ``1e-12 * lambda_max`` of zero are rounding
    noise and are clamped to 0; anything more negative is rejected.
    """
    C = _check_finite(C, "matrix")
    if C.ndim != 2 or C.shape[0] != C.shape[1] or C.shape[0] == 0:
        raise ValidationError(f"expected a square matrix, got shape {C.shape}")
    scale = max(np.abs(C).max(), 1.0)
    if np.abs(C - C.T).max() > SYMMETRY_TOL * scale:
        raise ValidationError("matrix is not symmetric")
    w = np.linalg.eigvalsh(C)[::-1]
    lam_max = max(w[0], 0.0)
    if w[-1] < -NEG_EIG_TOL * lam_max or (lam_max == 0.0 and w[-1] < 0):
        raise NumericalError(f"matrix is not positive semi-definite (min eigenvalue {w[-1]:.3e})")
    return Spectrum(np.clip(w, 0.0, None), C.shape)


def _distances_from(data: np.ndarray, query: np.ndarray) -> np.ndarray:
    diff = data - query
    return np.sqrt(np.sum(diff * diff, axis=1))


def knn_indices(pts: PointSet, query_index: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices and distances of the ``m`` nearest other points, nearest first."""
    if m < 1 or m >= pts.n:
        raise ValidationError(f"need 1 <= m <= n-1, got m={m} for n={pts.n}")
    if not 0 <= query_index < pts.n:
        raise ValidationError(f"query index {query_index} out of range")
    dist = _distances_from(pts.data, pts.data[query_index])
    others = np.delete(np.arange(pts.n), query_index)
    # stable sort keeps ascending index order on ties
    order = others[np.argsort(dist[others], kind="stable")[:m]]
    return order, dist[order]


def knn_distances(pts: PointSet, query_index: int, m: int) -> np.ndarray:
    return knn_indices(pts, query_index, m)[1]


def local_covariance(pts: PointSet, center_index: int, m: int) -> np.ndarray:
    """Population covariance (divisor m) of the centre and its m-1 nearest neighbours."""
    if m < 2:
        raise ValidationError(f"local covariance needs m >= 2, got {m}")
    idx, _ = knn_indices(pts, center_index, m - 1)
    block = pts.data[np.concatenate([[center_index], idx])]
    centered = block - block.mean(axis=0)
    cov = centered.T @ centered / m
    return (cov + cov.T) / 2
