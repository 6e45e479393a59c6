"""Baseline estimators: Levina-Bickel MLE, Fukunaga-Olsen local PCA, and PPCA with BIC."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import IdEstimate, NumericalError, PointSet, ValidationError
from .numerics import knn_distances, local_covariance, sym_eigenvalues


class InsufficientSamplesError(ValidationError):
    """PPCA needs at least d + 2 samples; reported as N/A in interval tables."""


@dataclass(frozen=True)
class MleParams:
    m: int = 20
    aggregation: str = "inverse_mean"

    def __post_init__(self):
        if self.m < 2:
            raise ValidationError("MLE needs m >= 2 neighbours")
        if self.aggregation != "inverse_mean":
            raise ValidationError("only inverse_mean aggregation is supported")


@dataclass(frozen=True)
class LpcaParams:
    m: int = 100
    alpha: float = 0.05

    def __post_init__(self):
        if self.m < 2:
            raise ValidationError("LPCA neighbourhood needs m >= 2")
        if not 0 < self.alpha < 1:
            raise ValidationError("alpha must lie in (0, 1)")


@dataclass(frozen=True)
class Aggregate:
    estimate: float
    n_included: int
    n_excluded: int


@dataclass
class PpcaResult:
    q_star: int
    log_likelihood: np.ndarray
    bic: np.ndarray
    n: int
    d: int
    eigenvalues: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))


def _map(fn, n, workers):
    if workers <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n)))


# -- MLE -------------------------------------------------------------------


def mle_from_distances(T: np.ndarray) -> float:
    """``[(1/(m-1)) * sum_j log(T_m / T_j)]^-1`` over the m-1 inner neighbours."""
    T = np.asarray(T, dtype=np.float64)
    if T[0] <= 0:
        raise NumericalError("zero neighbour distance (duplicate points)")
    log_sum = np.sum(np.log(T[-1] / T[:-1]))
    if log_sum <= 0:
        raise NumericalError("all neighbour distances equal (zero log-sum)")
    return (T.size - 1) / log_sum


def mle_id_point(pts: PointSet, index: int, m: int = 20) -> float:
    return mle_from_distances(knn_distances(pts, index, m))


def mle_id_points(pts: PointSet, params: MleParams = MleParams(), workers: int = 1) -> list[IdEstimate]:
    meta = {"m": params.m, "aggregation": params.aggregation}

    def one(i):
        try:
            return IdEstimate(pts.ids[i], "mle", mle_id_point(pts, i, params.m), params=meta)
        except NumericalError as exc:
            return IdEstimate(pts.ids[i], "mle", None, reason=str(exc), params=meta)

    if params.m >= pts.n:
        raise ValidationError(f"MLE needs m <= n-1, got m={params.m} for n={pts.n}")
    return _map(one, pts.n, workers)


def mle_id_aggregate(estimates) -> Aggregate:
    """Dataset estimate as the inverse of the mean per-point inverse; excluded points are counted."""
    values = [e.k_hat if isinstance(e, IdEstimate) else e for e in estimates]
    kept = np.array([v for v in values if v is not None], dtype=np.float64)
    if kept.size == 0:
        raise NumericalError("every point was excluded from the MLE aggregate")
    return Aggregate(float(1.0 / np.mean(1.0 / kept)), int(kept.size), len(values) - int(kept.size))


# -- local PCA -------------------------------------------------------------


def lpca_from_eigenvalues(eigenvalues, alpha: float) -> int:
    lam = np.asarray(eigenvalues, dtype=np.float64)
    if lam.max() <= 0:
        raise NumericalError("zero local covariance (all neighbours identical)")
    return int(np.count_nonzero(lam >= alpha * lam.max()))


def lpca_id_point(pts: PointSet, index: int, params: LpcaParams = LpcaParams()) -> tuple[int, np.ndarray]:
    """Count of local-covariance eigenvalues at least ``alpha`` times the largest."""
    spectrum = sym_eigenvalues(local_covariance(pts, index, params.m)).values
    return lpca_from_eigenvalues(spectrum, params.alpha), spectrum


def lpca_id_points(pts: PointSet, params: LpcaParams = LpcaParams(), workers: int = 1) -> list[IdEstimate]:
    if params.m > pts.n:
        raise ValidationError(f"LPCA neighbourhood m={params.m} exceeds n={pts.n}")
    meta = {"m": params.m, "alpha": params.alpha}

    def one(i):
        try:
            k, spectrum = lpca_id_point(pts, i, params)
            return IdEstimate(pts.ids[i], "lpca", k, spectrum=spectrum, params=meta)
        except NumericalError as exc:
            return IdEstimate(pts.ids[i], "lpca", None, reason=str(exc), params=meta)

    return _map(one, pts.n, workers)


# -- probabilistic PCA -----------------------------------------------------


def ppca_n_params(d: int, q: int) -> int:
    """Free parameters: mean, loading matrix modulo rotation, noise variance."""
    return d + d * q - q * (q - 1) // 2 + 1


def ppca_log_likelihood(eigenvalues, n: int, q: int) -> float:
    """Maximised PPCA log-likelihood from sample-covariance eigenvalues (divisor n).

    The discarded eigenvalues are averaged into the noise variance, which is
    floored at ``1e-12`` of the leading eigenvalue so exact subspaces stay finite.
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    d = lam.size
    floor = 1e-12 * max(lam[0], np.finfo(float).tiny)
    lam = np.maximum(lam, floor)
    noise = max(lam[q:].mean(), floor)
    return -0.5 * n * (d * np.log(2 * np.pi) + np.sum(np.log(lam[:q])) + (d - q) * np.log(noise) + d)


def ppca_id_global(pts: PointSet) -> PpcaResult:
    """Select the latent dimension by scanning q = 0..d-1 and maximising BIC (ties go to smaller q)."""
    n, d = pts.n, pts.d
    if n < d + 2:
        raise InsufficientSamplesError(f"insufficient samples: PPCA needs n >= d + 2 = {d + 2}, got n = {n}")
    centered = pts.data - pts.data.mean(axis=0)
    lam = sym_eigenvalues(centered.T @ centered / n).values
    ll = np.array([ppca_log_likelihood(lam, n, q) for q in range(d)])
    bic = ll - 0.5 * np.array([ppca_n_params(d, q) for q in range(d)]) * np.log(n)
    return PpcaResult(q_star=int(np.argmax(bic)), log_likelihood=ll, bic=bic, n=n, d=d, eigenvalues=lam)
