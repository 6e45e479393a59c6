"""Synthetic manifolds with known intrinsic dimension."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .core import PointSet, ValidationError

KINDS = ("subspace_gaussian", "k_sphere", "k_cube", "swiss_roll")
DEFAULT_DECAY = 0.8


@dataclass(frozen=True)
class ManifoldSpec:
    """Generator parameters.

    ``variances`` applies to ``subspace_gaussian`` only; when omitted the
    tangent variances decay geometrically from 1.0 by a factor 0.8.
    """

    kind: str
    ambient_d: int
    intrinsic_k: int
    n: int
    noise_sigma: float = 0.0
    seed: int = 0
    variances: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown manifold kind {self.kind!r}")
        if self.n < 1 or self.ambient_d < 1 or self.intrinsic_k < 0:
            raise ValidationError("n and ambient_d must be >= 1 and intrinsic_k >= 0")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be >= 0")
        if self.intrinsic_k > self.ambient_d:
            raise ValidationError(f"intrinsic_k={self.intrinsic_k} exceeds ambient_d={self.ambient_d}")
        if self.kind == "k_sphere" and self.intrinsic_k + 1 > self.ambient_d:
            raise ValidationError("a k-sphere needs ambient_d >= k + 1")
        if self.kind == "swiss_roll" and (self.intrinsic_k != 2 or self.ambient_d < 3):
            raise ValidationError("swiss_roll requires intrinsic_k = 2 and ambient_d >= 3")
        if self.variances is not None:
            if self.kind != "subspace_gaussian":
                raise ValidationError("variances only apply to subspace_gaussian")
            if len(self.variances) != self.intrinsic_k or any(v <= 0 for v in self.variances):
                raise ValidationError("need intrinsic_k positive variances")
            object.__setattr__(self, "variances", tuple(float(v) for v in self.variances))

    def tangent_variances(self) -> np.ndarray:
        if self.variances is not None:
            return np.array(self.variances)
        return DEFAULT_DECAY ** np.arange(self.intrinsic_k, dtype=np.float64)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ManifoldSpec":
        d = dict(d)
        if d.get("variances") is not None:
            d["variances"] = tuple(d["variances"])
        return cls(**d)


@dataclass(frozen=True)
class Manifold:
    points: PointSet
    spec: ManifoldSpec
    basis: np.ndarray

    @property
    def true_k(self) -> int:
        return self.spec.intrinsic_k


def orthonormal_basis(d: int, k: int, seed: int) -> np.ndarray:
    """Seeded d x k matrix with orthonormal columns (QR of a Gaussian matrix)."""
    rng = np.random.default_rng([seed, 0x5A5A])
    if k == 0:
        return np.zeros((d, 0))
    q, r = np.linalg.qr(rng.standard_normal((d, k)))
    return q * np.sign(np.diag(r))


def sample_manifold(spec: ManifoldSpec) -> Manifold:
    rng = np.random.default_rng(spec.seed)
    d, k, n = spec.ambient_d, spec.intrinsic_k, spec.n
    if spec.kind == "subspace_gaussian":
        basis = orthonormal_basis(d, k, spec.seed)
        z = rng.standard_normal((n, k)) * np.sqrt(spec.tangent_variances())
        x = z @ basis.T
    elif spec.kind == "k_sphere":
        basis = orthonormal_basis(d, k + 1, spec.seed)
        z = rng.standard_normal((n, k + 1))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        x = z @ basis.T
    elif spec.kind == "k_cube":
        basis = orthonormal_basis(d, k, spec.seed)
        x = rng.random((n, k)) @ basis.T
    else:
        basis = np.eye(d, 3)
        t = 1.5 * np.pi * (1 + 2 * rng.random(n))
        height = 21.0 * rng.random(n)
        x = np.zeros((n, d))
        x[:, 0] = t * np.cos(t)
        x[:, 1] = height
        x[:, 2] = t * np.sin(t)
    if spec.noise_sigma > 0:
        x = x + spec.noise_sigma * rng.standard_normal((n, d))
    return Manifold(PointSet(x), spec, basis)


def analytic_covariance(spec: ManifoldSpec) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance ``U diag(lambda) U^T + noise^2 I`` of a subspace Gaussian."""
    if spec.kind != "subspace_gaussian":
        raise ValidationError(f"analytic covariance is only defined for subspace_gaussian, not {spec.kind}")
    basis = orthonormal_basis(spec.ambient_d, spec.intrinsic_k, spec.seed)
    cov = (basis * spec.tangent_variances()) @ basis.T
    cov = (cov + cov.T) / 2 + spec.noise_sigma**2 * np.eye(spec.ambient_d)
    return np.zeros(spec.ambient_d), cov
