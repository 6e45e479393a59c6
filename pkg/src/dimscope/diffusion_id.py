"""Intrinsic dimension from the singular-value gap of a score matrix.

Around a point on a manifold, score vectors of slightly perturbed copies
concentrate in the normal space as the noise shrinks. Stacking K of them
as columns and taking singular values leaves a cliff after the normal
directions; the dimension is the ambient size minus the cliff position.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import IdEstimate, NumericalError, PointSet, SeedPolicy, ValidationError
from .numerics import Spectrum, singular_values
from .scoremodel import PrecomputedScores, ScoreOracle

LOW_CONFIDENCE_GAP = 1e-6


@dataclass(frozen=True)
class DiffusionIdParams:
    sigma_t0: float = 0.01
    K: int | None = None  # None means 4 * d
    seed: int = 0

    def __post_init__(self):
        if not self.sigma_t0 > 0:
            raise ValidationError("sigma_t0 must be positive")
        if self.K is not None and self.K < 2:
            raise ValidationError("K must be at least 2")

    def n_scores(self, d: int) -> int:
        return self.K if self.K is not None else 4 * d

    def as_dict(self, d: int | None = None) -> dict:
        return {"sigma_t0": self.sigma_t0, "K": self.n_scores(d) if d else self.K, "seed": self.seed}


@dataclass(frozen=True)
class GapResult:
    gap_index: int
    k_hat: int
    truncated: bool
    low_confidence: bool
    gap: float


def build_score_matrix(oracle: ScoreOracle, x0, params: DiffusionIdParams, rng: np.random.Generator) -> np.ndarray:
    """Evaluate the oracle at K Gaussian perturbations of ``x0``; one score per column."""
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.ndim != 1 or x0.size != oracle.dim:
        raise ValidationError(f"point of shape {x0.shape} does not match oracle dimension {oracle.dim}")
    K = params.n_scores(x0.size)
    eps = rng.standard_normal((K, x0.size))
    scores = np.asarray(oracle.evaluate(x0 + params.sigma_t0 * eps, params.sigma_t0), dtype=np.float64)
    if scores.shape != (K, x0.size):
        raise NumericalError(f"oracle returned shape {scores.shape}, expected {(K, x0.size)}")
    bad = ~np.isfinite(scores).all(axis=1)
    if bad.any():
        raise NumericalError(f"oracle returned non-finite score in column {int(np.flatnonzero(bad)[0])}")
    return scores.T


def spectral_gap_index(spectrum, d: int) -> GapResult:
    """Locate the largest drop between consecutive singular values.

    Indices are 1-based. With fewer than ``d`` values the search covers only
    the available ones and the result is flagged truncated; the first of
    several equal maximal gaps wins.
    """
    s = spectrum.values if isinstance(spectrum, Spectrum) else np.asarray(spectrum, dtype=np.float64)
    if s.size < 2:
        raise ValidationError("need at least two singular values to locate a gap")
    if np.any(np.diff(s) > 0):
        raise ValidationError("spectrum must be non-increasing")
    s = s[:d]
    gaps = s[:-1] - s[1:]
    i_star = int(np.argmax(gaps)) + 1
    gap = float(gaps[i_star - 1])
    return GapResult(
        gap_index=i_star,
        k_hat=d - i_star,
        truncated=s.size < d,
        low_confidence=gap < LOW_CONFIDENCE_GAP * s[0] or gap == 0.0,
        gap=gap,
    )


def estimate_from_matrix(S: np.ndarray, sample_id: str = "", params: dict | None = None) -> IdEstimate:
    d = S.shape[0]
    spectrum = singular_values(S)
    gap = spectral_gap_index(spectrum, d)
    return IdEstimate(
        sample_id=sample_id,
        method="diffusion",
        k_hat=gap.k_hat,
        spectrum=spectrum.values,
        gap_index=gap.gap_index,
        truncated=gap.truncated,
        low_confidence=gap.low_confidence,
        params=dict(params or {}),
    )


def estimate_id_at_point(oracle: ScoreOracle, x0, params: DiffusionIdParams = DiffusionIdParams(), sample_id: str = "", index: int = 0) -> IdEstimate:
    rng = SeedPolicy(params.seed).rng(index)
    S = build_score_matrix(oracle, x0, params, rng)
    return estimate_from_matrix(S, sample_id, params.as_dict(len(x0)))


def _excluded(sample_id, reason, params):
    return IdEstimate(sample_id=sample_id, method="diffusion", k_hat=None, reason=reason, params=params)


def batch_estimate(oracle, pts: PointSet, params: DiffusionIdParams = DiffusionIdParams(), workers: int = 1) -> list[IdEstimate]:
    """Estimate at every sample; failures become excluded records instead of aborting.

    ``oracle`` may also be a ``PrecomputedScores`` set aligned row-for-row
    with ``pts``, in which case no perturbation is drawn. Per-sample seeds
    depend only on ``(params.seed, row)``, so any worker count gives the
    same records in input order.
    """
    if isinstance(oracle, PrecomputedScores) and oracle.n != pts.n:
        raise ValidationError(f"{oracle.n} score sets for {pts.n} samples")
    meta = params.as_dict(pts.d)

    def one(i):
        sid = pts.ids[i]
        try:
            if isinstance(oracle, PrecomputedScores):
                meta_i = {**meta, "K": oracle.K, "source": "file"}
                return estimate_from_matrix(oracle.score_matrix(i), sid, meta_i)
            return estimate_id_at_point(oracle, pts.data[i], params, sid, i)
        except (NumericalError, ValidationError, np.linalg.LinAlgError) as exc:
            return _excluded(sid, str(exc), meta)

    if workers <= 1:
        return [one(i) for i in range(pts.n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(pts.n)))


def estimate_from_scores(scores: PrecomputedScores, ids=None) -> list[IdEstimate]:
    ids = ids or scores.ids or tuple(f"s{i:06d}" for i in range(scores.n))
    return [estimate_from_matrix(scores.score_matrix(i), ids[i], {"K": scores.K, "source": "file"}) for i in range(scores.n)]
