"""Energy scores from posterior logits and log-normal interval labelling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .core import NumericalError, ValidationError

SHIFT_EPS = 1e-9


@dataclass(frozen=True)
class EnergyRecord:
    sample_id: str
    energy_mean: float
    energy_std: float
    mean_interval: int
    std_interval: int


@dataclass(frozen=True)
class LogNormalFit:
    mu_ln: float
    sigma_ln: float
    transform: str = "identity"  # identity | negate | shift
    shift: float = 0.0

    @property
    def direction(self) -> int:
        # labels grow with the raw statistic, so higher energy means a higher interval
        return -1 if self.transform == "negate" else 1

    def apply(self, values) -> np.ndarray:
        return _transform(np.asarray(values, dtype=np.float64), self.transform, self.shift)

    def zscore(self, values) -> np.ndarray:
        if self.sigma_ln <= 0:
            raise NumericalError("degenerate log-normal fit (sigma_ln = 0)")
        v = self.apply(values)
        if np.any(v <= 0):
            raise ValidationError("value is not positive after the fitted transform")
        return self.direction * (np.log(v) - self.mu_ln) / self.sigma_ln


def _transform(values, kind, shift):
    if kind == "identity":
        return values
    if kind == "negate":
        return -values
    if kind == "shift":
        return values + shift
    raise ValidationError(f"unknown transform {kind!r}")


def energy_score(logits, T: float = 1.0) -> np.ndarray:
    """``-T * log(sum_i exp(f_i / T))`` over the last axis, overflow-safe."""
    if not T > 0:
        raise ValidationError("temperature must be positive")
    f = np.asarray(logits, dtype=np.float64)
    if not np.isfinite(f).all():
        raise ValidationError("non-finite logit")
    return -T * logsumexp(f / T, axis=-1)


def posterior_energy_stats(logits, T: float = 1.0) -> tuple[float, float]:
    """Mean and population std of per-draw energies for one ``(N, C)`` logit block."""
    f = np.asarray(logits, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] < 1 or f.shape[1] < 2:
        raise ValidationError(f"posterior logits must be (N >= 1, C >= 2), got {f.shape}")
    e = energy_score(f, T)
    return float(e.mean()), float(e.std())


def choose_transform(values) -> tuple[str, float]:
    """Positive values stay as-is, negative ones are negated, mixed signs are shifted above zero."""
    v = np.asarray(values, dtype=np.float64)
    if np.all(v > 0):
        return "identity", 0.0
    if np.all(v < 0):
        return "negate", 0.0
    return "shift", float(-np.min(v) + SHIFT_EPS)


def fit_lognormal(values, transform: str | None = None) -> LogNormalFit:
    """Maximum-likelihood log-normal fit (population std of the logs)."""
    values = np.asarray(values, dtype=np.float64)
    if transform is None:
        transform, shift = choose_transform(values)
    else:
        shift = float(-np.min(values) + SHIFT_EPS) if transform == "shift" else 0.0
    v = _transform(values, transform, shift)
    if np.any(v <= 0):
        raise ValidationError(f"non-positive values after {transform} transform")
    if np.unique(v).size < 2:
        raise NumericalError("degenerate log-normal fit: all values equal")
    logs = np.log(v)
    return LogNormalFit(float(logs.mean()), float(logs.std()), transform, shift)


def raw_bins(values, fit: LogNormalFit) -> np.ndarray:
    return np.floor(fit.zscore(values)).astype(np.int64)


def interval_label(value, fit: LogNormalFit, dataset_floor: int) -> int:
    """1-based unit-sigma bin of ``value`` relative to the lowest bin in the dataset."""
    return int(raw_bins([value], fit)[0]) - int(dataset_floor) + 1


def interval_labels(values, fit: LogNormalFit) -> np.ndarray:
    bins = raw_bins(values, fit)
    return bins - bins.min() + 1


def bin_energies(ids, logits, T: float = 1.0) -> tuple[list[EnergyRecord], dict]:
    """Stats per sample, then log-normal fits over the dataset, then interval labels.

    ``logits`` has shape ``(n, N, C)``. Returns the records and a summary of
    both fits for the run manifest.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 3:
        raise ValidationError(f"logits must have shape (n, N, C), got {logits.shape}")
    if len(ids) != logits.shape[0]:
        raise ValidationError(f"{len(ids)} ids for {logits.shape[0]} logit blocks")
    stats = np.array([posterior_energy_stats(block, T) for block in logits])
    means, stds = stats[:, 0], stats[:, 1]
    mean_fit = fit_lognormal(means)
    std_fit = fit_lognormal(stds)
    mean_iv = interval_labels(means, mean_fit)
    std_iv = interval_labels(stds, std_fit)
    records = [
        EnergyRecord(str(sid), float(m), float(s), int(a), int(b))
        for sid, m, s, a, b in zip(ids, means, stds, mean_iv, std_iv)
    ]
    summary = {
        "temperature": T,
        "mean_fit": vars(mean_fit),
        "std_fit": vars(std_fit),
        "n_mean_intervals": int(mean_iv.max()),
        "n_std_intervals": int(std_iv.max()),
        "bin_width_sigma": 1.0,
    }
    return records, summary



ENERGY_HEADER = ["id", "mean", "std", "mean_interval", "std_interval"]


def write_energy_csv(path, records):
    from .io import write_csv

    return write_csv(path, ENERGY_HEADER, [(r.sample_id, r.energy_mean, r.energy_std, r.mean_interval, r.std_interval) for r in records])


def read_energy_csv(path) -> list[EnergyRecord]:
    from .io import read_csv

    return [
        EnergyRecord(row["id"], float(row["mean"]), float(row["std"]), int(row["mean_interval"]), int(row["std_interval"]))
        for row in read_csv(path)
    ]
