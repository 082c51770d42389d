"""Bone and soft tissue decomposition of grayscale X-ray images."""

from bstd.image import GradientField, gradient, min_max, new_image, normalize
from bstd.laplace import SolverOptions, SolveStats, residual, solve_dirichlet, solve_direct
from bstd.masks import MaskParams, auto_mask
from bstd.decompose import (
    ContrastStats,
    DecomposeOptions,
    DecompositionResult,
    compute_alpha,
    compute_bone,
    decompose,
    reconstruct,
)

__all__ = [
    "ContrastStats",
    "DecomposeOptions",
    "DecompositionResult",
    "GradientField",
    "MaskParams",
    "SolveStats",
    "SolverOptions",
    "auto_mask",
    "compute_alpha",
    "compute_bone",
    "decompose",
    "gradient",
    "min_max",
    "new_image",
    "normalize",
    "reconstruct",
    "residual",
    "solve_dirichlet",
    "solve_direct",
]
