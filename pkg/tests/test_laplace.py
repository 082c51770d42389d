import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bstd.laplace import (
    SolverOptions,
    coarsen_mask,
    prolong,
    residual,
    restrict,
    smooth,
    solve_dirichlet,
    solve_direct,
    split_floating,
)
from conftest import components, random_connected_mask, residual_bruteforce

TIGHT = SolverOptions(tol=1e-10)


def test_empty_mask_returns_input(rng):
    f = rng.random((7, 9))
    S, stats = solve_dirichlet(f, np.zeros_like(f, dtype=bool))
    np.testing.assert_array_equal(S, f)
    assert stats.converged and stats.iterations == 0 and stats.final_residual == 0.0


def test_constant_boundary_gives_constant_fill():
    f = np.full((20, 20), 0.3)
    f[5:15, 5:15] = 0.9
    mask = np.zeros(f.shape, dtype=bool)
    mask[4:16, 4:16] = True
    S, _ = solve_dirichlet(f, mask, TIGHT)
    np.testing.assert_allclose(S, 0.3, atol=1e-10)


def test_single_pixel_is_neighbour_mean():
    f = np.array([[0.0, 0.2, 0.0], [0.4, 0.9, 0.6], [0.0, 0.8, 0.0]])
    mask = np.zeros((3, 3), dtype=bool)
    mask[1, 1] = True
    S, _ = solve_dirichlet(f, mask, TIGHT)
    assert S[1, 1] == pytest.approx(0.5, abs=1e-12)


def test_row_segment_interpolates_linearly():
    # mask pixels in a one-row image see only their left and right neighbours
    f = np.zeros((1, 12))
    f[0, 0], f[0, -1] = 0.1, 0.7
    mask = np.zeros_like(f, dtype=bool)
    mask[0, 1:-1] = True
    S, _ = solve_dirichlet(f, mask, TIGHT)
    np.testing.assert_allclose(S[0], np.linspace(0.1, 0.7, 12), atol=1e-10)


def test_frame_rule_one_sided_gradient():
    # mask touching the left frame: zero flux there, so a field that is linear
    # in y and constant along rows is still the harmonic fill
    f = np.tile(np.linspace(0.2, 0.6, 6)[:, None], (1, 8))
    mask = np.zeros(f.shape, dtype=bool)
    mask[1:-1, :7] = True
    S, _ = solve_dirichlet(f, mask, TIGHT)
    np.testing.assert_allclose(S, f, atol=1e-9)
    assert residual_bruteforce(S, mask) <= 1e-9


def test_12x12_matches_direct_solve(rng):
    f = rng.random((12, 12))
    mask = np.zeros(f.shape, dtype=bool)
    mask[3:9, 2:10] = True
    S, stats = solve_dirichlet(f, mask, SolverOptions(tol=1e-10))
    assert stats.converged
    assert np.abs(S - solve_direct(f, mask)).max() <= 1e-8


def test_direct_solve_is_harmonic(rng):
    f = rng.random((10, 10))
    mask = random_connected_mask(rng, f.shape, 0.5)
    S = solve_direct(f, mask)
    assert residual_bruteforce(S, mask) <= 1e-12
    np.testing.assert_array_equal(S[~mask], f[~mask])


def test_direct_solve_refuses_huge_systems():
    with pytest.raises(ValueError):
        solve_direct(np.zeros((120, 120)), np.pad(np.ones((110, 110), bool), 5))


def test_residual_matches_bruteforce(rng):
    S = rng.random((9, 11))
    mask = rng.random(S.shape) < 0.5
    assert residual(S, mask) == pytest.approx(residual_bruteforce(S, mask), rel=1e-12)
    assert residual(S, np.zeros_like(mask)) == 0.0


def test_residual_of_plane_vanishes():
    y, x = np.mgrid[0:8, 0:8]
    plane = 0.01 * x + 0.02 * y
    interior = np.zeros(plane.shape, dtype=bool)
    interior[1:-1, 1:-1] = True
    assert residual(plane, interior) <= 1e-14


def test_restrict_prolong_preserve_constants():
    np.testing.assert_allclose(restrict(np.full((9, 8), 0.4)), 0.4, rtol=1e-14)
    np.testing.assert_allclose(prolong(np.full((5, 4), 0.4), (9, 8)), 0.4, rtol=1e-14)
    assert restrict(np.zeros((9, 8))).shape == (5, 4)


def test_prolong_is_bilinear_on_planes():
    y, x = np.mgrid[0:5, 0:6]
    coarse = 0.3 * x + 0.1 * y
    Y, X = np.mgrid[0:9, 0:11]
    np.testing.assert_allclose(prolong(coarse, (9, 11)), 0.15 * X + 0.05 * Y, atol=1e-14)
    with pytest.raises(ValueError):
        prolong(coarse, (20, 20))


def test_coarse_mask_is_anchored(rng):
    mask = random_connected_mask(rng, (40, 40), 0.6)
    coarse = coarsen_mask(mask)
    assert coarse.shape == (20, 20)
    # every coarse point is an injected fine interior point
    assert np.all(mask[::2, ::2][coarse])
    assert not split_floating(coarse)[1].any()


def test_smoothing_reaches_direct_solution(rng):
    f = rng.random((8, 8))
    mask = np.zeros(f.shape, dtype=bool)
    mask[2:6, 1:7] = True
    S = smooth(f, f, mask, sweeps=400)
    np.testing.assert_allclose(S, solve_direct(f, mask), atol=1e-12)
    # a sweep from the exact solution leaves it in place
    exact = solve_direct(f, mask)
    np.testing.assert_allclose(smooth(exact, f, mask, 1), exact, atol=1e-14)


def test_outside_pixels_bit_identical(rng):
    f = rng.random((30, 25))
    mask = random_connected_mask(rng, f.shape, 0.4)
    for method in ("multigrid", "gauss_seidel", "direct"):
        S, _ = solve_dirichlet(f, mask, SolverOptions(method=method))
        assert np.array_equal(S[~mask], f[~mask])


def test_floating_component_left_at_image():
    f = np.linspace(0, 1, 36).reshape(6, 6)
    mask = np.ones((6, 6), dtype=bool)
    S, stats = solve_dirichlet(f, mask)
    np.testing.assert_array_equal(S, f)
    assert stats.floating_pixels == 36


def test_split_floating_separates_components():
    mask = np.zeros((6, 6), dtype=bool)
    mask[2:4, 2:4] = True
    solvable, floating = split_floating(mask)
    assert solvable.sum() == 4 and not floating.any()
    solvable, floating = split_floating(np.ones((3, 3), dtype=bool))
    assert not solvable.any() and floating.all()


@pytest.mark.parametrize("method", ["gauss_seidel", "direct"])
def test_alternative_methods_agree(rng, method):
    f = rng.random((24, 20))
    mask = random_connected_mask(rng, f.shape, 0.5)
    S, stats = solve_dirichlet(f, mask, SolverOptions(method=method, tol=1e-10))
    assert stats.converged and stats.method == method
    assert np.abs(S - solve_direct(f, mask)).max() <= 1e-8


def test_plain_vcycles_converge(rng):
    f = rng.random((64, 64))
    mask = random_connected_mask(rng, f.shape, 0.5)
    S, stats = solve_dirichlet(f, mask, SolverOptions(accelerate=False, tol=1e-9, max_vcycles=100))
    assert stats.converged
    assert np.abs(S - solve_direct(f, mask)).max() <= 1e-7


def test_unconverged_run_is_flagged(rng):
    f = rng.random((64, 64))
    mask = np.zeros(f.shape, dtype=bool)
    mask[4:60, 4:60] = True
    S, stats = solve_dirichlet(f, mask, SolverOptions(method="gauss_seidel", max_sweeps=3))
    assert not stats.converged
    assert stats.final_residual == pytest.approx(residual(S, mask))


def test_multigrid_iteration_count_is_size_independent():
    counts = []
    for n in (65, 257):
        y, x = np.mgrid[0:n, 0:n] / n
        f = 0.5 + 0.3 * np.sin(6 * x) * np.cos(5 * y)
        mask = np.zeros(f.shape, dtype=bool)
        mask[n // 8 : -n // 8, n // 8 : -n // 8] = True
        _, stats = solve_dirichlet(f, mask, SolverOptions(tol=1e-9))
        counts.append(stats.iterations)
    assert counts[1] <= counts[0] + 4


@pytest.mark.parametrize("kwargs", [{"method": "jacobi"}, {"tol": 0}, {"max_vcycles": 0}])
def test_solver_options_validation(kwargs):
    with pytest.raises(ValueError):
        SolverOptions(**kwargs)


def _boundary_bounds_hold(f, mask, S, slack=1e-6):
    for pixels, boundary in components(mask):
        if not boundary:
            continue
        values = [f[p] for p in boundary]
        inside = np.array([S[p] for p in pixels])
        if inside.min() < min(values) - slack or inside.max() > max(values) + slack:
            return False
    return True


@given(st.integers(0, 2**32 - 1), st.integers(2, 20), st.integers(2, 20), st.floats(0.1, 0.8))
def test_maximum_principle_and_oracle(seed, h, w, fill):
    rng = np.random.default_rng(seed)
    f = rng.random((h, w))
    mask = random_connected_mask(rng, (h, w), fill)
    S, stats = solve_dirichlet(f, mask)
    assert stats.final_residual <= 1e-6
    assert _boundary_bounds_hold(f, mask, S)
    assert np.abs(S - solve_direct(f, mask)).max() <= 1e-5
