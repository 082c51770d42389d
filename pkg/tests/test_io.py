import json

import numpy as np
import pytest
from PIL import Image as PILImage

from bstd.io import (
    ImageFormatError,
    MaskShapeError,
    Report,
    read_grayscale,
    read_mask,
    read_report,
    write_grayscale,
    write_report,
)

REPORT_FIELDS = {
    "input_path", "width", "height", "alpha", "solver_residual", "solver_iterations",
    "clamped_pixel_count", "contrast_gain_median", "timings",
}


def test_read_text_graymap(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_text("P2\n# two by two\n2 2\n255\n0 255\n128 64\n")
    img = read_grayscale(path)
    np.testing.assert_array_equal(img, [[0.0, 1.0], [128 / 255, 64 / 255]])


def test_read_binary_graymap_16bit_big_endian(tmp_path):
    path = tmp_path / "a.pgm"
    raw = np.array([[65535, 65535, 65535]], dtype=">u2")
    path.write_bytes(b"P5 3 1 65535\n" + raw.tobytes())
    np.testing.assert_array_equal(read_grayscale(path), np.ones((1, 3)))

    raw = np.array([[1, 256]], dtype=">u2")
    path.write_bytes(b"P5\n2 1\n65535\n" + raw.tobytes())
    np.testing.assert_array_equal(read_grayscale(path), [[1 / 65535, 256 / 65535]])


def test_read_png_16bit_all_max(tmp_path):
    path = tmp_path / "a.png"
    PILImage.fromarray(np.full((4, 5), 65535, dtype=np.uint16)).save(path)
    img = read_grayscale(path)
    assert img.shape == (4, 5)
    assert np.all(img == 1.0)


@pytest.mark.parametrize("content", [
    b"P5\n4 4\n255\n\x00\x01\x02",
    b"P2\n3 3\n255\n1 2 3",
    b"P5\n4 4",
    b"P5\n4 x4\n255\n",
])
def test_truncated_or_corrupt_graymap(tmp_path, content):
    path = tmp_path / "bad.pgm"
    path.write_bytes(content)
    with pytest.raises(ImageFormatError):
        read_grayscale(path)


def test_truncated_png(tmp_path):
    path = tmp_path / "a.png"
    PILImage.fromarray(np.arange(400, dtype=np.uint8).reshape(20, 20)).save(path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(ImageFormatError):
        read_grayscale(path)


@pytest.mark.parametrize("mode", ["RGB", "RGBA", "LA", "P"])
def test_colour_png_rejected(tmp_path, mode):
    path = tmp_path / "c.png"
    PILImage.new(mode, (3, 3)).save(path)
    with pytest.raises(ImageFormatError):
        read_grayscale(path)


def test_unsupported_inputs(tmp_path):
    (tmp_path / "x.ppm").write_bytes(b"P6\n1 1\n255\n\x00\x00\x00")
    (tmp_path / "x.bin").write_bytes(b"hello")
    (tmp_path / "x.pgm").write_bytes(b"P5\n1 1\n4095\n\x00\x00")
    for name in ("x.ppm", "x.bin", "x.pgm"):
        with pytest.raises(ImageFormatError):
            read_grayscale(tmp_path / name)
    with pytest.raises(FileNotFoundError):
        read_grayscale(tmp_path / "missing.png")


@pytest.mark.parametrize("ext", ["pgm", "png"])
def test_write_constant_one_at_depth_8(tmp_path, ext):
    path = tmp_path / f"one.{ext}"
    write_grayscale(np.ones((3, 4)), path, 8)
    if ext == "png":
        samples = np.array(PILImage.open(path))
    else:
        samples = np.frombuffer(path.read_bytes()[-12:], dtype=np.uint8)
    assert np.all(samples == 255)


def test_write_half_at_depth_16(tmp_path):
    path = tmp_path / "half.pgm"
    write_grayscale(np.full((2, 3), 0.5), path, 16)
    samples = np.frombuffer(path.read_bytes()[-12:], dtype=">u2")
    assert np.all(samples == 32768) and round(0.5 * 65535) == 32768


@pytest.mark.parametrize("ext", ["pgm", "png"])
@pytest.mark.parametrize("depth", [8, 16])
def test_round_trip_within_quantization_bound(tmp_path, rng, ext, depth):
    bound = 1 / (2 * ((1 << depth) - 1))
    for trial in range(5):
        img = rng.random((int(rng.integers(1, 40)), int(rng.integers(1, 40))))
        path = tmp_path / f"r{trial}.{ext}"
        write_grayscale(img, path, depth)
        back = read_grayscale(path)
        assert back.shape == img.shape
        assert np.abs(back - img).max() <= bound * (1 + 1e-12)


def test_out_of_range_values_are_clamped_and_counted(tmp_path):
    path = tmp_path / "c.pgm"
    n = write_grayscale(np.array([[-0.5, 0.2, 1.5]]), path, 8)
    assert n == 2
    np.testing.assert_array_equal(read_grayscale(path), [[0.0, 51 / 255, 1.0]])


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        write_grayscale(np.zeros((2, 2)), tmp_path / "missing" / "x.png")
    with pytest.raises(ImageFormatError):
        write_grayscale(np.zeros((2, 2)), tmp_path / "x.jpg")


def test_read_mask_convention_and_shape(tmp_path):
    path = tmp_path / "m.pgm"
    write_grayscale(np.array([[0.0, 127 / 255, 128 / 255, 1.0]]), path, 8)
    np.testing.assert_array_equal(read_mask(path), [[False, False, True, True]])
    with pytest.raises(MaskShapeError):
        read_mask(path, shape=(2, 2))


def _report(**overrides):
    fields = dict(
        input_path="knee.png", width=10, height=20, alpha=1.0, solver_residual=3.2e-7,
        solver_iterations=7, clamped_pixel_count=3, contrast_gain_median=1.7,
        timings={"mask_s": 0.1, "solve_s": 0.2, "decompose_s": 0.05, "total_s": 0.4},
    )
    fields.update(overrides)
    return Report(**fields)


def test_report_field_names_and_alpha(tmp_path):
    path = tmp_path / "r.json"
    write_report(_report(), path)
    doc = json.loads(path.read_text())
    assert REPORT_FIELDS <= set(doc)
    assert set(doc["timings"]) == {"mask_s", "solve_s", "decompose_s", "total_s"}
    assert doc["alpha"] == 1.0
    assert '"alpha": 1.0' in path.read_text()


def test_report_round_trip(tmp_path):
    path = tmp_path / "r.json"
    report = _report(alpha=1.4399999999999999, converged=False, degenerate=True)
    write_report(report, path)
    assert read_report(path) == report


def test_report_residual_precision(tmp_path):
    path = tmp_path / "r.json"
    value = 3.2e-7 * (1 + 1e-13)
    write_report(_report(solver_residual=value), path)
    back = read_report(path).solver_residual
    assert abs(back - value) <= 1e-15 * value
