"""Numerical laboratory for spread-controlling contrastive losses on the hypersphere."""

from spreadlab.sphere import (
    EmbeddingConfig,
    SimplexFrame,
    make_collapsed,
    make_mu_theta,
    make_uniform,
    regular_simplex,
    rotate_in_plane,
)
from spreadlab.losses import (
    AugmentationMap,
    LossWeights,
    asymptotic_empirical,
    asymptotic_gradient,
    cnce_batch,
    spread_batch,
    supcon_batch,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentationMap",
    "EmbeddingConfig",
    "LossWeights",
    "SimplexFrame",
    "asymptotic_empirical",
    "asymptotic_gradient",
    "cnce_batch",
    "make_collapsed",
    "make_mu_theta",
    "make_uniform",
    "regular_simplex",
    "rotate_in_plane",
    "spread_batch",
    "supcon_batch",
]
