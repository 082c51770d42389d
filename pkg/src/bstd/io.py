"""Grayscale image files and run reports.

Supported images: portable graymap (P2 text, P5 binary; maxval 255 or
65535, 16-bit P5 samples big-endian) and single-channel 8/16-bit PNG.
Reports are flat JSON documents.
"""

import json
import logging
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from bstd.image import as_image, denormalize, normalize

log = logging.getLogger(__name__)

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
_PNG_GRAY = 0


class ImageFormatError(ValueError):
    """Unsupported, colour or corrupt image file."""


class MaskShapeError(ValueError):
    """A mask file whose dimensions differ from the image."""


# --- portable graymap ---------------------------------------------------------


def _pgm_header(data: bytes):
    """Parse magic, width, height, maxval; return them and the raster offset."""
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated graymap header")
        try:
            fields.append(int(data[start:pos]))
        except ValueError:
            raise ImageFormatError(f"bad graymap header field {data[start:pos]!r}") from None
    # exactly one whitespace byte separates the header from a binary raster
    return (*fields, pos + 1)


def _read_pgm(data: bytes) -> np.ndarray:
    magic = data[:2]
    width, height, maxval, offset = _pgm_header(data)
    if width < 1 or height < 1:
        raise ImageFormatError(f"bad graymap dimensions {width}x{height}")
    if maxval not in (255, 65535):
        raise ImageFormatError(f"unsupported graymap maxval {maxval}; expected 255 or 65535")
    depth = 8 if maxval == 255 else 16
    count = width * height
    if magic == b"P5":
        dtype = np.dtype(np.uint8) if depth == 8 else np.dtype(">u2")
        raster = data[offset : offset + count * dtype.itemsize]
        if len(raster) < count * dtype.itemsize:
            raise ImageFormatError("truncated graymap raster")
        samples = np.frombuffer(raster, dtype=dtype)
    else:
        try:
            samples = np.array(data[offset - 1 :].split(), dtype=np.int64)
        except ValueError:
            raise ImageFormatError("non-numeric sample in text graymap") from None
        if samples.size < count:
            raise ImageFormatError("truncated graymap raster")
        samples = samples[:count]
        if samples.min() < 0 or samples.max() > maxval:
            raise ImageFormatError("graymap sample exceeds maxval")
    return normalize(samples.reshape(height, width), depth)


def _write_pgm(fh, samples: np.ndarray, depth: int):
    h, w = samples.shape
    fh.write(f"P5\n{w} {h}\n{(1 << depth) - 1}\n".encode("ascii"))
    fh.write(samples.astype(np.uint8 if depth == 8 else ">u2").tobytes())


# --- PNG ------------------------------------------------------------------------


def _read_png(path: Path, data: bytes) -> np.ndarray:
    if len(data) < 33 or data[12:16] != b"IHDR":
        raise ImageFormatError("truncated PNG header")
    depth, colour = data[24], data[25]
    if colour != _PNG_GRAY:
        raise ImageFormatError(f"only single-channel grayscale PNG is supported (colour type {colour})")
    if depth not in (8, 16):
        raise ImageFormatError(f"unsupported PNG bit depth {depth}")
    try:
        with PILImage.open(path) as im:
            im.load()
            samples = np.array(im)
    except (OSError, SyntaxError, ValueError) as exc:
        raise ImageFormatError(f"corrupt PNG: {exc}") from exc
    if samples.ndim != 2:
        raise ImageFormatError("PNG decoded to more than one channel")
    return normalize(samples.astype(np.int64), depth)


def _write_png(fh, samples: np.ndarray, depth: int):
    if depth == 8:
        im = PILImage.fromarray(samples.astype(np.uint8), mode="L")
    else:
        im = PILImage.fromarray(samples.astype(np.uint16))
    im.save(fh, format="PNG")


# ---------------------------------------------------------------------------------


def read_grayscale(path) -> np.ndarray:
    """Read a graymap or grayscale PNG as intensities in [0, 1]."""
    path = Path(path)
    data = path.read_bytes()
    if data[:2] in (b"P2", b"P5"):
        return _read_pgm(data)
    if data[:8] == PNG_SIGNATURE:
        return _read_png(path, data)
    if data[:2] in (b"P3", b"P6"):
        raise ImageFormatError(f"{path}: colour pixmaps are not supported")
    raise ImageFormatError(f"{path}: unsupported image format")


def _atomic_write(path: Path, writer):
    """Write via a temporary file in the same directory, so failures leave no partial file."""
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            writer(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_grayscale(img, path, bit_depth: int = 16) -> int:
    """Quantize to ``bit_depth`` and write; the format follows the extension.

    Values outside [0, 1] are clamped; the number of clamped pixels is
    returned (and logged).
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix not in (".pgm", ".png"):
        raise ImageFormatError(f"{path}: output extension must be .pgm or .png")
    samples, clamped = denormalize(as_image(img), bit_depth)
    if clamped:
        log.warning("%s: clamped %d pixels into [0, 1]", path, clamped)
    writer = _write_pgm if suffix == ".pgm" else _write_png
    _atomic_write(path, lambda fh: writer(fh, samples, bit_depth))
    return clamped


def read_mask(path, shape=None) -> np.ndarray:
    """Mask image convention: a pixel above one half lies inside the mask."""
    img = read_grayscale(path)
    if shape is not None and img.shape != tuple(shape):
        raise MaskShapeError(
            f"mask {path} is {img.shape[1]}x{img.shape[0]}, image is {shape[1]}x{shape[0]}"
        )
    return img > 0.5


def write_mask(mask, path, bit_depth: int = 8) -> int:
    return write_grayscale(np.asarray(mask, dtype=np.float64), path, bit_depth)


# --- reports ----------------------------------------------------------------------

TIMING_KEYS = ("mask_s", "solve_s", "decompose_s", "total_s")


@dataclass
class Report:
    input_path: str
    width: int
    height: int
    alpha: float
    solver_residual: float
    solver_iterations: int
    clamped_pixel_count: int
    contrast_gain_median: float
    timings: dict = field(default_factory=lambda: {k: 0.0 for k in TIMING_KEYS})
    converged: bool = True
    degenerate: bool = False

    @classmethod
    def from_result(cls, input_path, result) -> "Report":
        h, w = result.soft_tissue.shape
        return cls(
            input_path=str(input_path),
            width=w,
            height=h,
            alpha=float(result.alpha),
            solver_residual=float(result.stats.final_residual),
            solver_iterations=int(result.stats.iterations),
            clamped_pixel_count=int(result.clamped_pixel_count),
            contrast_gain_median=float(result.contrast.median_gain),
            timings={k: float(result.timings.get(k, 0.0)) for k in TIMING_KEYS},
            converged=bool(result.stats.converged),
            degenerate=bool(result.degenerate),
        )

    def to_dict(self) -> dict:
        return asdict(self)


def write_report(report: Report, path) -> None:
    # json writes floats with repr(), which round-trips every double exactly
    text = json.dumps(report.to_dict(), indent=2) + "\n"
    _atomic_write(Path(path), lambda fh: fh.write(text.encode("utf-8")))


def read_report(path) -> Report:
    return Report(**json.loads(Path(path).read_text()))
