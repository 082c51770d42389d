import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_connected_mask(rng, shape, fill=0.35):
    """Grow a 4-connected blob from a random seed until it covers ``fill`` of the grid."""
    h, w = shape
    mask = np.zeros(shape, dtype=bool)
    target = max(1, int(fill * h * w))
    frontier = [(int(rng.integers(h)), int(rng.integers(w)))]
    mask[frontier[0]] = True
    count = 1
    while count < target and frontier:
        y, x = frontier[int(rng.integers(len(frontier)))]
        dy, dx = ((0, 1), (0, -1), (1, 0), (-1, 0))[int(rng.integers(4))]
        ny, nx = y + dy, x + dx
        if 0 <= ny < h and 0 <= nx < w and not mask[ny, nx]:
            mask[ny, nx] = True
            frontier.append((ny, nx))
            count += 1
    return mask


def residual_bruteforce(S, mask):
    """Pure-Python 5-point defect with the zero-flux frame rule."""
    h, w = S.shape
    worst = 0.0
    for y in range(h):
        for x in range(w):
            if not mask[y, x]:
                continue
            nbrs = [S[y + dy, x + dx] for dy, dx in ((0, 1), (0, -1), (1, 0), (-1, 0))
                    if 0 <= y + dy < h and 0 <= x + dx < w]
            worst = max(worst, abs(sum(nbrs) - len(nbrs) * S[y, x]))
    return worst


def components(mask):
    """4-connected components by BFS: list of (pixels, boundary pixels)."""
    h, w = mask.shape
    seen = np.zeros_like(mask)
    out = []
    for sy in range(h):
        for sx in range(w):
            if not mask[sy, sx] or seen[sy, sx]:
                continue
            stack = [(sy, sx)]
            seen[sy, sx] = True
            pixels, boundary = [], set()
            while stack:
                y, x = stack.pop()
                pixels.append((y, x))
                for dy, dx in ((0, 1), (0, -1), (1, 0), (-1, 0)):
                    ny, nx = y + dy, x + dx
                    if not (0 <= ny < h and 0 <= nx < w):
                        continue
                    if mask[ny, nx]:
                        if not seen[ny, nx]:
                            seen[ny, nx] = True
                            stack.append((ny, nx))
                    else:
                        boundary.add((ny, nx))
            out.append((pixels, sorted(boundary)))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
