"""Split an X-ray image into a soft-tissue layer and a bone layer.

The imaging model is

    f = U (1 - S) / alpha + S

with ``f`` the observed image, ``S`` the smooth soft tissue, ``U`` the bone
image and ``alpha`` a global gain. ``S`` is the harmonic fill of ``f`` over a
mask covering the bones, ``alpha`` normalizes the largest bone value to one
and ``U`` then follows in closed form.
"""

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from bstd.image import as_image, as_mask, gradient
from bstd.laplace import SolverOptions, SolveStats, solve_dirichlet
from bstd.masks import MaskParams, auto_mask

SOFT_TISSUE_CEILING = 1.0 - 1e-6


@dataclass
class ContrastStats:
    median_gain: float
    mean_grad_f: float
    mean_grad_U: float
    epsilon: float
    # mask pixels with |grad f| > epsilon that entered the median
    n_pixels: int


@dataclass
class DecomposeOptions:
    # MaskParams for automatic masks, or the path of a mask image
    mask: MaskParams | str | Path = field(default_factory=MaskParams)
    solver: SolverOptions = field(default_factory=SolverOptions)
    bit_depth: int = 16
    report_path: str | Path | None = None
    epsilon: float = 1e-4

    def __post_init__(self):
        if self.bit_depth not in (8, 16):
            raise ValueError(f"output bit depth must be 8 or 16, got {self.bit_depth}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")


@dataclass
class DecompositionResult:
    soft_tissue: np.ndarray
    bone: np.ndarray
    alpha: float
    degenerate: bool
    clamped_pixel_count: int
    stats: SolveStats
    contrast: ContrastStats
    mask: np.ndarray
    timings: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.stats.converged


def clamp_background(S, f) -> tuple[np.ndarray, int]:
    """Enforce S <= f, and S < 1 wherever S stays below f.

    Pixels where the fill overshoots the image become pure background
    (S = f, hence U = 0). Only pixels with S < f reach the bone formula, so
    only those need the ceiling below one. Returns the clamped grid and the
    number of pixels that changed.
    """
    S = as_image(S)
    f = as_image(f)
    if S.shape != f.shape:
        raise ValueError(f"shape mismatch: {S.shape} vs {f.shape}")
    clamped = np.minimum(S, f)
    mixed = clamped < f
    clamped = np.where(mixed, np.minimum(clamped, SOFT_TISSUE_CEILING), clamped)
    return clamped, int(np.count_nonzero(clamped != S))


def _ratio(f, S):
    f = as_image(f)
    S = as_image(S)
    mixed = f > S
    if np.any((S >= 1.0) & mixed):
        raise ValueError("soft tissue must stay below 1 wherever it is below the image")
    return np.divide(f - S, 1.0 - S, out=np.zeros_like(f), where=mixed)


def compute_alpha(f, S) -> float:
    """Global gain making the brightest bone pixel exactly one.

    With f <= 1 the ratio (f - S) / (1 - S) never exceeds one, so the gain is
    at least one. If f equals S everywhere there is no bone signal and the
    gain is 1 by convention.
    """
    peak = float(_ratio(f, S).max())
    return 1.0 / peak if peak > 0.0 else 1.0


def compute_bone(f, S, alpha: float) -> np.ndarray:
    return np.minimum(alpha * _ratio(f, S), 1.0)


def reconstruct(U, S, alpha: float) -> np.ndarray:
    U = as_image(U)
    S = as_image(S)
    return U * (1.0 - S) / alpha + S


def contrast_report(f, U, mask, epsilon: float = 1e-4) -> ContrastStats:
    f = as_image(f)
    U = as_image(U)
    mask = as_mask(mask, f.shape)
    if not mask.any():
        return ContrastStats(0.0, 0.0, 0.0, epsilon, 0)
    # a one-pixel margin around the mask leaves every mask-pixel stencil intact
    box = _grown_box(mask)
    if min(f[box].shape) < 2:
        box = (slice(None), slice(None))
    f, U, mask = f[box], U[box], mask[box]
    grad_f = gradient(f).magnitude
    grad_u = gradient(U).magnitude
    usable = mask & (grad_f > epsilon)
    gains = grad_u[usable] / grad_f[usable]
    return ContrastStats(
        median_gain=float(np.median(gains)) if gains.size else 0.0,
        mean_grad_f=float(grad_f[mask].mean()),
        mean_grad_U=float(grad_u[mask].mean()),
        epsilon=epsilon,
        n_pixels=int(gains.size),
    )


def _grown_box(mask):
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    h, w = mask.shape
    return (slice(max(rows[0] - 1, 0), min(rows[-1] + 2, h)),
            slice(max(cols[0] - 1, 0), min(cols[-1] + 2, w)))


def decompose(f, mask, opts: DecomposeOptions | None = None) -> DecompositionResult:
    """Soft tissue by harmonic fill, then alpha, then the bone image."""
    opts = opts or DecomposeOptions()
    f = as_image(f)
    if f.min() < 0.0 or f.max() > 1.0:
        raise ValueError("image intensities must lie in [0, 1]")
    mask = as_mask(mask, f.shape)

    t0 = time.perf_counter()
    S, stats = solve_dirichlet(f, mask, opts.solver)
    t1 = time.perf_counter()
    S, n_clamped = clamp_background(S, f)
    ratio = _ratio(f, S)
    peak = float(ratio.max())
    degenerate = peak == 0.0
    alpha = 1.0 / peak if not degenerate else 1.0
    U = np.minimum(alpha * ratio, 1.0)
    contrast = contrast_report(f, U, mask, opts.epsilon) if min(f.shape) >= 2 else \
        ContrastStats(0.0, 0.0, 0.0, opts.epsilon, 0)
    t2 = time.perf_counter()
    return DecompositionResult(
        soft_tissue=S,
        bone=U,
        alpha=alpha,
        degenerate=degenerate,
        clamped_pixel_count=n_clamped,
        stats=stats,
        contrast=contrast,
        mask=mask,
        timings={"solve_s": t1 - t0, "decompose_s": t2 - t1},
    )


def make_mask(f, opts: DecomposeOptions) -> np.ndarray:
    """The mask named by the options: automatic, or read from a mask image."""
    if isinstance(opts.mask, MaskParams):
        return auto_mask(f, opts.mask)
    from bstd.io import read_mask

    return read_mask(opts.mask, shape=as_image(f).shape)


def run(f, opts: DecomposeOptions | None = None) -> DecompositionResult:
    """Mask generation plus ``decompose``, with per-stage timings."""
    opts = opts or DecomposeOptions()
    start = time.perf_counter()
    mask = make_mask(f, opts)
    mask_s = time.perf_counter() - start
    result = decompose(f, mask, opts)
    result.timings = {"mask_s": mask_s, **result.timings, "total_s": time.perf_counter() - start}
    return result
