"""Grayscale image and mask primitives.

Images are float64 arrays of shape ``(height, width)`` holding intensities in
[0, 1]; masks are bool arrays of the same shape. Pixels are addressed as
``img[y, x]`` with x the column and y the row.
"""

from dataclasses import dataclass

import numpy as np

MAX_PIXELS = 1 << 31


@dataclass(frozen=True)
class GradientField:
    gx: np.ndarray
    gy: np.ndarray

    @property
    def magnitude(self) -> np.ndarray:
        return np.hypot(self.gx, self.gy)

    @property
    def shape(self):
        return self.gx.shape


def new_image(width: int, height: int, fill: float = 0.0) -> np.ndarray:
    if width < 1 or height < 1:
        raise ValueError(f"image dimensions must be >= 1, got {width}x{height}")
    if width * height > MAX_PIXELS:
        raise ValueError(f"image of {width}x{height} pixels is too large")
    return np.full((height, width), float(fill), dtype=np.float64)


def max_sample(bit_depth: int) -> int:
    if bit_depth not in (8, 16):
        raise ValueError(f"unsupported bit depth {bit_depth}; expected 8 or 16")
    return (1 << bit_depth) - 1


def normalize(raw, bit_depth: int) -> np.ndarray:
    """Map unsigned samples to [0, 1] by dividing by the largest sample value."""
    top = max_sample(bit_depth)
    raw = np.asarray(raw)
    if raw.size and (raw.min() < 0 or raw.max() > top):
        raise ValueError(f"samples out of range for {bit_depth}-bit data")
    return raw.astype(np.float64) / top


def denormalize(img: np.ndarray, bit_depth: int) -> tuple[np.ndarray, int]:
    """Quantize to unsigned samples by rounding to nearest.

    Returns the sample array and the number of pixels that had to be clamped
    into [0, 1] first.
    """
    top = max_sample(bit_depth)
    img = np.asarray(img, dtype=np.float64)
    outside = (img < 0.0) | (img > 1.0) | ~np.isfinite(img)
    clipped = np.clip(np.nan_to_num(img, nan=0.0), 0.0, 1.0)
    dtype = np.uint8 if bit_depth == 8 else np.uint16
    return np.rint(clipped * top).astype(dtype), int(outside.sum())


def as_image(img) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D image, got shape {arr.shape}")
    return arr


def as_mask(mask, shape=None) -> np.ndarray:
    arr = np.asarray(mask, dtype=bool)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D mask, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise ValueError(f"mask shape {arr.shape} does not match image shape {tuple(shape)}")
    return arr


def gradient(img) -> GradientField:
    """Central differences in the interior, one-sided differences on the frame."""
    img = as_image(img)
    h, w = img.shape
    if h < 2 or w < 2:
        raise ValueError(f"gradient needs at least 2x2 pixels, got {w}x{h}")
    gx = np.empty_like(img)
    gy = np.empty_like(img)
    gx[:, 1:-1] = (img[:, 2:] - img[:, :-2]) / 2.0
    gx[:, 0] = img[:, 1] - img[:, 0]
    gx[:, -1] = img[:, -1] - img[:, -2]
    gy[1:-1, :] = (img[2:, :] - img[:-2, :]) / 2.0
    gy[0, :] = img[1, :] - img[0, :]
    gy[-1, :] = img[-1, :] - img[-2, :]
    return GradientField(gx, gy)


def min_max(img, mask=None) -> tuple[float, float]:
    img = as_image(img)
    if mask is None:
        return float(img.min()), float(img.max())
    mask = as_mask(mask, img.shape)
    if not mask.any():
        raise ValueError("min_max over an empty mask")
    values = img[mask]
    return float(values.min()), float(values.max())
