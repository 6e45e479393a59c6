"""Shared domain types, image flattening and seed derivation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

METHODS = ("diffusion", "mle", "lpca", "ppca")

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class ValidationError(ValueError):
    """Input failed a structural precondition (shape, finiteness, ids)."""


class NumericalError(ArithmeticError):
    """A computation was rejected for numerical reasons (divergence, degenerate fit)."""


@dataclass(frozen=True)
class PointSet:
    """n samples in d ambient dimensions, one row per sample."""

    data: np.ndarray
    ids: tuple[str, ...] = ()

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValidationError(f"point set must be a non-empty 2-D matrix, got shape {data.shape}")
        bad = ~np.isfinite(data).all(axis=1)
        if bad.any():
            raise ValidationError(f"non-finite values in row {int(np.flatnonzero(bad)[0])}")
        ids = tuple(str(i) for i in self.ids) if len(self.ids) else default_ids(data.shape[0])
        if len(ids) != data.shape[0]:
            raise ValidationError(f"{len(ids)} ids for {data.shape[0]} rows")
        if len(set(ids)) != len(ids):
            raise ValidationError("sample ids must be unique")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def subset(self, rows: Sequence[int]) -> "PointSet":
        rows = list(rows)
        return PointSet(self.data[rows], tuple(self.ids[r] for r in rows))


@dataclass(frozen=True)
class ImageGrid:
    pixels: np.ndarray
    id: str = ""

    def __post_init__(self):
        pixels = np.array(self.pixels, dtype=np.float64, copy=True)
        if pixels.ndim != 2 or min(pixels.shape) < 3:
            raise ValidationError(f"image {self.id!r} must be at least 3x3, got shape {pixels.shape}")
        if not np.isfinite(pixels).all():
            raise ValidationError(f"image {self.id!r} has non-finite pixels")
        pixels.flags.writeable = False
        object.__setattr__(self, "pixels", pixels)


@dataclass(frozen=True)
class IdEstimate:
    """Per-sample intrinsic dimension estimate.

    ``spectrum`` holds singular values (diffusion) or eigenvalues (lpca) in
    non-increasing order, and is empty for methods without one. ``k_hat`` is
    None when the sample was excluded; ``reason`` then says why.
    """

    sample_id: str
    method: str
    k_hat: float | None
    spectrum: np.ndarray = field(default_factory=lambda: np.empty(0))
    gap_index: int | None = None
    truncated: bool = False
    low_confidence: bool = False
    reason: str = ""
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}")
        spectrum = np.asarray(self.spectrum, dtype=np.float64)
        if spectrum.size > 1 and np.any(np.diff(spectrum) > 0):
            raise ValidationError("spectrum must be sorted non-increasing")
        object.__setattr__(self, "spectrum", spectrum)

    @property
    def excluded(self) -> bool:
        return self.k_hat is None


@dataclass(frozen=True)
class SeedPolicy:
    global_seed: int = 0

    def stream_seed(self, index: int) -> int:
        return derive_seed(self.global_seed, index)

    def rng(self, index: int) -> np.random.Generator:
        return np.random.default_rng(self.stream_seed(index))


def derive_seed(global_seed: int, index: int) -> int:
    """Splitmix64 finalizer applied to ``global_seed`` advanced by ``index + 1`` golden-ratio steps."""
    z = (int(global_seed) + (int(index) + 1) * _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def default_ids(n: int) -> tuple[str, ...]:
    return tuple(f"s{i:06d}" for i in range(n))


def flatten_image(img) -> np.ndarray:
    """Row-major flattening; accepts an ImageGrid or any finite 2-D array."""
    if isinstance(img, ImageGrid):
        return np.ascontiguousarray(img.pixels).reshape(-1).copy()
    px = np.asarray(img, dtype=np.float64)
    if px.ndim != 2:
        raise ValidationError(f"expected a 2-D grid, got shape {px.shape}")
    if not np.isfinite(px).all():
        raise ValidationError("grid has non-finite pixels")
    return np.ascontiguousarray(px).reshape(-1).copy()


def unflatten_image(point, h: int, w: int, id: str = "") -> ImageGrid:
    point = np.asarray(point, dtype=np.float64)
    if point.size != h * w:
        raise ValidationError(f"cannot reshape {point.size} values into {h}x{w}")
    return ImageGrid(point.reshape(h, w), id)


def images_to_points(images: Sequence[ImageGrid]) -> PointSet:
    shapes = {img.pixels.shape for img in images}
    if len(shapes) != 1:
        raise ValidationError(f"images have mixed shapes {sorted(shapes)}")
    return PointSet(np.stack([flatten_image(img) for img in images]), tuple(img.id for img in images))


def normalize_pixels(pts: PointSet, mode: str = "per_sample_minmax") -> PointSet:
    """Map each row affinely onto [0, 1]; constant rows become zeros."""
    if mode == "none":
        return pts
    if mode != "per_sample_minmax":
        raise ValidationError(f"unknown normalization mode {mode!r}")
    lo = pts.data.min(axis=1, keepdims=True)
    span = pts.data.max(axis=1, keepdims=True) - lo
    safe = np.where(span > 0, span, 1.0)
    out = np.where(span > 0, (pts.data - lo) / safe, 0.0)
    return PointSet(out, pts.ids)
