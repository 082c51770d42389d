"""Synthetic test images built from the decomposition model itself.

``xray_phantom`` composes a smooth soft-tissue layer and a set of bone-like
shapes through  f = U (1 - S) / alpha + S,  so the ground truth is known.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class Phantom:
    f: np.ndarray
    soft_tissue: np.ndarray
    bone: np.ndarray
    alpha: float


def _grid(width, height):
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    return xx / max(width - 1, 1), yy / max(height - 1, 1)


def bilinear(width, height, c00=0.2, c10=0.35, c01=0.3, c11=0.25) -> np.ndarray:
    """Bilinear surface; exactly harmonic for the 5-point Laplacian."""
    x, y = _grid(width, height)
    return c00 * (1 - x) * (1 - y) + c10 * x * (1 - y) + c01 * (1 - x) * y + c11 * x * y


def bump(width, height, center, radius, height_value=1.0) -> np.ndarray:
    """Smooth compactly supported bump, zero outside ``radius`` (in pixels)."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    r2 = ((xx - center[0]) ** 2 + (yy - center[1]) ** 2) / float(radius) ** 2
    out = np.zeros((height, width))
    inside = r2 < 1.0
    out[inside] = height_value * (1.0 - r2[inside]) ** 2
    return out


def disk(width, height, center, radius) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width]
    return (xx - center[0]) ** 2 + (yy - center[1]) ** 2 <= radius**2


def _bone_layer(width, height, rng, n_bones):
    x, y = _grid(width, height)
    aspect = width / height
    bone = np.zeros((height, width))
    for _ in range(n_bones):
        cx, cy = rng.uniform(0.25, 0.75, size=2)
        length = rng.uniform(0.25, 0.45)
        thickness = rng.uniform(0.04, 0.08)
        theta = rng.uniform(0, np.pi)
        dx, dy = (x - cx) * aspect, y - cy
        along = dx * np.cos(theta) + dy * np.sin(theta)
        across = -dx * np.sin(theta) + dy * np.cos(theta)
        r = np.sqrt((along / length) ** 2 + (across / thickness) ** 2)
        # bright cortical rim around a darker marrow channel
        shaft = np.clip(40.0 * (1.0 - r), 0.0, 1.0)
        marrow = 0.35 * np.exp(-((across / (0.5 * thickness)) ** 2)) * (r < 1)
        trabecular = 0.08 * np.sin(60 * along) * np.sin(45 * across) * (r < 1)
        bone = np.maximum(bone, np.clip(shaft - marrow + trabecular, 0.0, None))
    return bone / bone.max()


def xray_phantom(width=512, height=512, seed=0, alpha=1.5, n_bones=3, noise=0.002) -> Phantom:
    """Soft tissue ellipse plus elongated bones, mixed by the imaging model."""
    rng = np.random.default_rng(seed)
    x, y = _grid(width, height)
    body = np.exp(-(((x - 0.5) / 0.45) ** 2 + ((y - 0.5) / 0.55) ** 2) ** 2)
    soft = 0.12 + 0.18 * body + 0.04 * x
    bone = _bone_layer(width, height, rng, n_bones)
    f = bone * (1.0 - soft) / alpha + soft
    if noise:
        f = f + rng.normal(0.0, noise, size=f.shape)
    return Phantom(np.clip(f, 0.0, 1.0), soft, bone, alpha)
