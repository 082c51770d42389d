"""Bone-covering masks from thresholding and binary morphology.

The mask only has to cover the bright bone regions; it does not need to
follow bone boundaries, so the defaults lean towards generous coverage.
Dilation uses a square (Chebyshev) structuring element.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from bstd.image import as_image, as_mask

HIST_BINS = 256
_FOUR_NEIGHBOURS = ndimage.generate_binary_structure(2, 1)
_EIGHT_NEIGHBOURS = ndimage.generate_binary_structure(2, 2)


@dataclass
class MaskParams:
    # "otsu" or a fixed threshold in [0, 1]
    threshold: str | float = "otsu"
    close_radius: int = 3
    dilate_radius: int = 5
    fill_holes: bool = True
    min_component_area: int = 64

    def __post_init__(self):
        if isinstance(self.threshold, str):
            if self.threshold != "otsu":
                self.threshold = float(self.threshold)
        if not isinstance(self.threshold, str) and not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"fixed threshold must lie in [0, 1], got {self.threshold}")
        for name in ("close_radius", "dilate_radius", "min_component_area"):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise ValueError(f"{name} must be a nonnegative integer, got {value}")
            setattr(self, name, int(value))


def histogram_levels(img) -> np.ndarray:
    """Quantize intensities to 256 levels (0..255) by rounding."""
    return np.clip(np.rint(as_image(img) * (HIST_BINS - 1)), 0, HIST_BINS - 1).astype(np.intp)


def otsu_threshold(img) -> float:
    """Threshold maximizing the between-class variance of a 256-bin histogram.

    Level k splits the histogram into ``<= k`` and ``> k``; the returned
    threshold sits halfway between levels k and k+1, so ``img > t`` selects
    the upper class. Ties are broken towards the middle of the maximal run.
    A constant image returns its own value.
    """
    img = as_image(img)
    lo, hi = float(img.min()), float(img.max())
    if lo == hi:
        return lo
    hist = np.bincount(histogram_levels(img).ravel(), minlength=HIST_BINS).astype(np.float64)
    levels = np.arange(HIST_BINS, dtype=np.float64)
    total = hist.sum()
    w0 = np.cumsum(hist)
    w1 = total - w0
    m0 = np.cumsum(hist * levels)
    m1 = m0[-1] - m0
    with np.errstate(divide="ignore", invalid="ignore"):
        between = w0 * w1 * (m0 / w0 - m1 / w1) ** 2
    between = np.nan_to_num(between, nan=0.0)
    if between.max() <= 0.0:
        return lo
    best = np.flatnonzero(between >= between.max() * (1 - 1e-12))
    k = int(best[(len(best) - 1) // 2])
    return (k + 0.5) / (HIST_BINS - 1)


def threshold_mask(img, t: float) -> np.ndarray:
    return as_image(img) > t


def dilate(mask, radius: int) -> np.ndarray:
    """Chebyshev-ball dilation; pixels beyond the frame count as false."""
    mask = as_mask(mask)
    if radius <= 0:
        return mask.copy()
    size = 2 * int(radius) + 1
    return ndimage.maximum_filter(mask, size=size, mode="constant", cval=False)


def erode(mask, radius: int) -> np.ndarray:
    """Complement of dilating the complement, so the frame itself never erodes."""
    mask = as_mask(mask)
    return ~dilate(~mask, radius)


def close(mask, radius: int) -> np.ndarray:
    return erode(dilate(mask, radius), radius)


def fill_holes(mask) -> np.ndarray:
    """Set every false region that is not 4-connected to the frame."""
    mask = as_mask(mask)
    labels, n = ndimage.label(~mask, structure=_FOUR_NEIGHBOURS)
    if n == 0:
        return mask.copy()
    open_to_frame = np.zeros(n + 1, dtype=bool)
    for edge in (labels[0], labels[-1], labels[:, 0], labels[:, -1]):
        open_to_frame[edge] = True
    open_to_frame[0] = True
    return ~open_to_frame[labels] | mask


def remove_small_components(mask, min_area: int) -> np.ndarray:
    """Drop 8-connected true components with fewer than ``min_area`` pixels."""
    mask = as_mask(mask)
    if min_area <= 1 or not mask.any():
        return mask.copy()
    labels, n = ndimage.label(mask, structure=_EIGHT_NEIGHBOURS)
    sizes = np.bincount(labels.ravel(), minlength=n + 1)
    keep = sizes >= min_area
    keep[0] = False
    return keep[labels]


def auto_mask(img, params: MaskParams | None = None) -> np.ndarray:
    """Threshold, drop specks, close, fill holes, then dilate."""
    params = params or MaskParams()
    img = as_image(img)
    t = otsu_threshold(img) if params.threshold == "otsu" else float(params.threshold)
    mask = threshold_mask(img, t)
    mask = remove_small_components(mask, params.min_component_area)
    mask = close(mask, params.close_radius)
    if params.fill_holes:
        mask = fill_holes(mask)
    return dilate(mask, params.dilate_radius)


def mask_from_image(img) -> np.ndarray:
    """Interpret a user-supplied mask image: values above one half are inside."""
    return as_image(img) > 0.5
