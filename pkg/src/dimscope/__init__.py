"""Intrinsic dimension estimation from diffusion-model scores, with classical baselines."""

__version__ = "0.1.0"

from .core import (
    IdEstimate,
    ImageGrid,
    NumericalError,
    PointSet,
    SeedPolicy,
    ValidationError,
    flatten_image,
    normalize_pixels,
    unflatten_image,
)
from .diffusion_id import DiffusionIdParams, batch_estimate, estimate_id_at_point, spectral_gap_index
from .scoremodel import DsmConfig, GaussianScore, VeSchedule, load_score_matrix, train_dsm_score_net
from .synth import ManifoldSpec, analytic_covariance, sample_manifold

__all__ = [
    "DiffusionIdParams",
    "DsmConfig",
    "GaussianScore",
    "IdEstimate",
    "ImageGrid",
    "ManifoldSpec",
    "NumericalError",
    "PointSet",
    "SeedPolicy",
    "ValidationError",
    "VeSchedule",
    "analytic_covariance",
    "batch_estimate",
    "estimate_id_at_point",
    "flatten_image",
    "load_score_matrix",
    "normalize_pixels",
    "sample_manifold",
    "spectral_gap_index",
    "train_dsm_score_net",
    "unflatten_image",
]
