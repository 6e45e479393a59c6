"""Score oracles: closed-form Gaussian, precomputed (file-backed), and a trained DSM network.

Every oracle exposes ``dim`` and ``evaluate(x, sigma)`` where ``x`` is a single
point of shape ``(d,)`` or a batch ``(K, d)``. Oracles are immutable once
built, so a single instance can be shared between worker threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from .core import NumericalError, PointSet, ValidationError
from .io import read_tensor, write_csv


class ScoreOracle(Protocol):
    dim: int

    def evaluate(self, x: np.ndarray, sigma: float) -> np.ndarray: ...


@dataclass(frozen=True)
class VeSchedule:
    """Variance-exploding noise scale ``sigma(t) = sigma_min * (sigma_max / sigma_min) ** t``."""

    sigma_min: float = 0.01
    sigma_max: float = 1.0

    def __post_init__(self):
        if not 0 < self.sigma_min < self.sigma_max:
            raise ValidationError("need 0 < sigma_min < sigma_max")

    def sigma(self, t):
        return self.sigma_min * (self.sigma_max / self.sigma_min) ** np.asarray(t)


@dataclass(frozen=True)
class DsmConfig:
    hidden_layers: tuple[int, ...] = (128, 128, 128)
    steps: int = 20000
    batch_size: int = 128
    learning_rate: float = 1e-3
    seed: int = 0
    schedule: VeSchedule = field(default_factory=VeSchedule)

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1:
            raise ValidationError("steps must be >= 0 and batch_size >= 1")
        if not self.hidden_layers or any(w < 1 for w in self.hidden_layers):
            raise ValidationError("hidden_layers must be a non-empty sequence of positive widths")


def _check_sigma(sigma):
    if not sigma > 0 or not math.isfinite(sigma):
        raise ValidationError(f"noise scale must be positive and finite, got {sigma}")


def _as_batch(x, dim):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != dim or x.ndim > 2:
        raise ValidationError(f"expected points of dimension {dim}, got shape {x.shape}")
    return x


# -- analytic --------------------------------------------------------------


class GaussianScore:
    """Exact score of ``N(mean, cov)`` convolved with ``N(0, sigma^2 I)``.

    The covariance is diagonalised once, so each evaluation costs two
    matrix products regardless of sigma.
    """

    def __init__(self, mean, covariance):
        mean = np.asarray(mean, dtype=np.float64)
        cov = np.asarray(covariance, dtype=np.float64)
        if cov.ndim != 2 or cov.shape != (mean.size, mean.size):
            raise ValidationError(f"covariance shape {cov.shape} does not match mean of length {mean.size}")
        if not (np.isfinite(cov).all() and np.isfinite(mean).all()):
            raise ValidationError("mean and covariance must be finite")
        scale = max(np.abs(cov).max(), 1.0)
        if np.abs(cov - cov.T).max() > 1e-12 * scale:
            raise ValidationError("covariance is not symmetric")
        w, v = np.linalg.eigh((cov + cov.T) / 2)
        if w.min() < -1e-12 * max(w.max(), 0.0) or (w.max() <= 0 and w.min() < 0):
            raise NumericalError(f"covariance is not positive semi-definite (min eigenvalue {w.min():.3e})")
        self.dim = mean.size
        self.mean = mean
        self.covariance = cov
        self._eigvals = np.clip(w, 0.0, None)
        self._eigvecs = v
        for arr in (self.mean, self.covariance, self._eigvals, self._eigvecs):
            arr.flags.writeable = False

    def evaluate(self, x, sigma):
        _check_sigma(sigma)
        x = _as_batch(x, self.dim)
        coords = (x - self.mean) @ self._eigvecs
        return -(coords / (self._eigvals + sigma**2)) @ self._eigvecs.T


def analytic_gaussian_score(mean, covariance, x, sigma_t) -> np.ndarray:
    """Closed-form score ``-(cov + sigma_t^2 I)^{-1} (x - mean)``."""
    return GaussianScore(mean, covariance).evaluate(x, sigma_t)


def tangent_normal_ratio(scores, tangent_basis) -> np.ndarray:
    """Per-score ratio of tangent-projected to normal-projected magnitude."""
    scores = np.atleast_2d(scores)
    tangent = scores @ tangent_basis @ tangent_basis.T
    normal = scores - tangent
    return np.linalg.norm(tangent, axis=1) / np.linalg.norm(normal, axis=1)


# -- file-backed -----------------------------------------------------------


class PrecomputedScores:
    """Score vectors computed elsewhere, shaped ``(n_samples, K, d)``."""

    def __init__(self, scores, ids=None):
        scores = np.asarray(scores, dtype=np.float64)
        if scores.ndim != 3:
            raise ValidationError(f"score tensor must have shape (n, K, d), got {scores.shape}")
        if not np.isfinite(scores).all():
            raise ValidationError("score tensor contains non-finite values")
        scores.flags.writeable = False
        self.scores = scores
        self.ids = tuple(ids) if ids is not None else None
        if self.ids is not None and len(self.ids) != scores.shape[0]:
            raise ValidationError(f"{len(self.ids)} ids for {scores.shape[0]} score sets")

    @property
    def n(self):
        return self.scores.shape[0]

    @property
    def K(self):
        return self.scores.shape[1]

    @property
    def dim(self):
        return self.scores.shape[2]

    def score_matrix(self, i: int) -> np.ndarray:
        """d x K matrix whose columns are the score vectors of sample ``i``."""
        return self.scores[i].T


def load_score_matrix(path, d: int | None = None, ids=None) -> PrecomputedScores:
    scores = read_tensor(path)
    if scores.ndim != 3:
        raise ValidationError(f"{path}: expected rank-3 score tensor (n, K, d), got shape {scores.shape}")
    if d is not None and scores.shape[2] != d:
        raise ValidationError(f"{path}: score dimension {scores.shape[2]} does not match declared d={d}")
    return PrecomputedScores(scores, ids)


# -- denoising score matching ----------------------------------------------


def _silu(x):
    return x / (1.0 + np.exp(-x))


class DsmScoreNet:
    """Trained MLP score model, evaluated in float64 numpy.

    The network sees standardized coordinates with ``log(sigma)`` appended
    and its output is divided by sigma, so it only has to learn the
    noise direction rather than the 1/sigma blow-up of the score.
    """

    def __init__(self, weights, biases, shift, scale, config: DsmConfig, loss_trace=()):
        self.weights = tuple(np.array(w, dtype=np.float64) for w in weights)
        self.biases = tuple(np.array(b, dtype=np.float64) for b in biases)
        self.shift = np.array(shift, dtype=np.float64)
        self.scale = np.array(scale, dtype=np.float64)
        for arr in (*self.weights, *self.biases, self.shift, self.scale):
            arr.flags.writeable = False
        self.dim = self.shift.size
        self.config = config
        self.loss_trace = tuple(loss_trace)

    def evaluate(self, x, sigma):
        _check_sigma(sigma)
        x = _as_batch(x, self.dim)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        h = np.concatenate([(x - self.shift) / self.scale, np.full((x.shape[0], 1), math.log(sigma))], axis=1)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = _silu(h @ w.T + b)
        out = (h @ self.weights[-1].T + self.biases[-1]) / sigma
        if not np.isfinite(out).all():
            raise NumericalError("score network produced non-finite output")
        return out[0] if single else out


def dsm_loss(oracle: ScoreOracle, data: PointSet, schedule: VeSchedule, seed: int = 0, n_draws: int = 1) -> float:
    """Monte Carlo estimate of ``E[sigma^2 * |s(x + sigma*eps, sigma) + eps/sigma|^2]``."""
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(n_draws):
        t = 1.0 - rng.random(data.n)  # uniform on (0, 1]
        sig = schedule.sigma(t)
        eps = rng.standard_normal(data.data.shape)
        xt = data.data + sig[:, None] * eps
        s = np.stack([oracle.evaluate(row, float(sg)) for row, sg in zip(xt, sig)])
        total += float(np.mean(np.sum((sig[:, None] * s + eps) ** 2, axis=1)))
    return total / n_draws


def train_dsm_score_net(data: PointSet, cfg: DsmConfig = DsmConfig()) -> DsmScoreNet:
    """Fit an MLP to the variance-exploding weighted DSM objective.

    Training is single-threaded with its own torch RNG state, so the same
    data and config always give the same loss trace and weights.
    """
    import torch

    d = data.d
    shift = data.data.mean(axis=0)
    scale = data.data.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    widths = (d + 1, *cfg.hidden_layers, d)

    with torch.random.fork_rng(devices=[]):
        threads = torch.get_num_threads()
        torch.set_num_threads(1)
        try:
            torch.manual_seed(cfg.seed)
            gen = torch.Generator().manual_seed(cfg.seed)
            layers = []
            for i in range(len(widths) - 1):
                layers.append(torch.nn.Linear(widths[i], widths[i + 1]))
                if i < len(widths) - 2:
                    layers.append(torch.nn.SiLU())
            net = torch.nn.Sequential(*layers)
            opt = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)

            xs = torch.tensor((data.data - shift) / scale, dtype=torch.float32)
            scale_t = torch.tensor(scale, dtype=torch.float32)
            log_min = math.log(cfg.schedule.sigma_min)
            log_ratio = math.log(cfg.schedule.sigma_max / cfg.schedule.sigma_min)
            trace = []
            for step in range(cfg.steps):
                idx = torch.randint(0, data.n, (cfg.batch_size,), generator=gen)
                t = 1.0 - torch.rand(cfg.batch_size, 1, generator=gen)
                log_sig = log_min + t * log_ratio
                sig = torch.exp(log_sig)
                eps = torch.randn(cfg.batch_size, d, generator=gen)
                noisy = xs[idx] + sig * eps / scale_t
                pred = net(torch.cat([noisy, log_sig], dim=1))
                # sigma * score = network output, so the weighted residual is out + eps
                loss = ((pred + eps) ** 2).sum(dim=1).mean()
                value = float(loss.detach())
                if not math.isfinite(value):
                    raise NumericalError(f"DSM training diverged at step {step} (loss={value})")
                trace.append(value)
                opt.zero_grad()
                loss.backward()
                opt.step()
        finally:
            torch.set_num_threads(threads)

    linears = [m for m in net if isinstance(m, torch.nn.Linear)]
    weights = [m.weight.detach().double().numpy() for m in linears]
    biases = [m.bias.detach().double().numpy() for m in linears]
    return DsmScoreNet(weights, biases, shift, scale, cfg, trace)


def write_loss_trace(path, net: DsmScoreNet) -> Path:
    return write_csv(path, ["step", "loss"], [(i, v) for i, v in enumerate(net.loss_trace)])
