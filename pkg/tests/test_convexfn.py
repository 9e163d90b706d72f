import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bco_lab.convexfn import (
    FAMILIES,
    DiscreteMeasure,
    Grid,
    GridFunction,
    GridMismatch,
    argmin_grid,
    make_convex,
    read_function_csv,
    read_sequence_csv,
    regularize,
    sample_convex,
    validate_convex,
    vee,
    weighted_l2,
    write_function_csv,
    write_sequence_csv,
)


def gf(values, K=None):
    values = np.asarray(values, dtype=float)
    return GridFunction(Grid.uniform(K or values.size), values)


def test_uniform_grid_excludes_zero():
    g = Grid.uniform(4)
    assert np.allclose(g.points, [0.25, 0.5, 0.75, 1.0])


@pytest.mark.parametrize("points", [[0.5, 0.5], [0.2, 0.1], [-0.1, 0.5], [0.5, 1.2], []])
def test_grid_rejects_bad_points(points):
    with pytest.raises(ValueError):
        Grid(np.array(points))


def test_validate_convex_examples():
    assert validate_convex(gf([0.5, 0.5, 0.5]))
    assert not validate_convex(gf([0.0, 1.0, 0.0]))


def test_cumulative_nondecreasing_slopes_are_convex():
    rng = np.random.default_rng(0)
    for _ in range(200):
        K = int(rng.integers(3, 40))
        slopes = np.sort(rng.normal(size=K - 1))
        vals = np.concatenate(([0.0], np.cumsum(slopes / K)))
        assert validate_convex(gf(vals))


def test_argmin_ties_and_singleton():
    assert argmin_grid(gf([1.0, 0.0, 0.0, 1.0])) == 1
    assert argmin_grid(gf([0.3])) == 0


def test_argmin_matches_scan_and_constant_shift():
    rng = np.random.default_rng(1)
    grid = Grid.uniform(30)
    for _ in range(100):
        f = sample_convex(rng, grid, "random-slopes")
        best = min(range(30), key=lambda i: (f.values[i], i))
        assert argmin_grid(f) == best
        assert argmin_grid(GridFunction(grid, f.values + 0.25)) == best


def test_weighted_l2_examples():
    grid = Grid.uniform(3)
    nu = DiscreteMeasure.uniform(grid)
    f = GridFunction(grid, [0.0, 0.25, 0.5])
    zero = GridFunction(grid, np.zeros(3))
    assert weighted_l2(f, f, nu) == 0.0
    assert weighted_l2(GridFunction(grid, np.ones(3)), zero, nu) == pytest.approx(1.0)
    assert weighted_l2(f, zero, nu) == pytest.approx(math.sqrt(0.3125 / 3), abs=1e-12)
    assert weighted_l2(f, zero, nu) == pytest.approx(0.32275, abs=1e-5)


def test_weighted_l2_grid_mismatch():
    a, b = gf([0.0, 1.0]), gf([0.0, 1.0, 0.5])
    with pytest.raises(GridMismatch, match="grid mismatch"):
        weighted_l2(a, b, DiscreteMeasure.uniform(a.grid))


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 25), st.integers(0, 2**32 - 1))
def test_weighted_l2_triangle(K, seed):
    rng = np.random.default_rng(seed)
    grid = Grid.uniform(K)
    f, g, h = (GridFunction(grid, rng.uniform(size=K)) for _ in range(3))
    nu = DiscreteMeasure(grid, rng.dirichlet(np.ones(K)))
    assert weighted_l2(f, h, nu) <= weighted_l2(f, g, nu) + weighted_l2(g, h, nu) + 1e-9


def test_regularize_examples():
    f = gf(np.zeros(4))
    assert np.allclose(regularize(f, 0.1, 1).values, [0.025, 0.0, 0.025, 0.05])
    g = gf([0.3, 0.1, 0.2, 0.6])
    assert np.array_equal(regularize(g, 0.0, 2).values, g.values)


def test_regularize_keeps_convexity():
    rng = np.random.default_rng(2)
    grid = Grid.uniform(25)
    for _ in range(300):
        f = sample_convex(rng, grid, "random-slopes")
        eps = rng.uniform(0, 0.5)
        fe = regularize(f, eps, int(rng.integers(25)))
        assert validate_convex(fe)
        assert np.all(fe.values >= f.values)


def test_vee_family_is_symmetric_kink():
    grid = Grid.uniform(8)
    f = sample_convex(np.random.default_rng(0), grid, "vee(0.5)")
    assert np.allclose(f.values, 2 * np.abs(grid.points - 0.5))
    assert np.allclose(f.values, vee(0.5).on(grid).values)


def test_sample_convex_determinism_and_unknown_family():
    grid = Grid.uniform(17)
    a = sample_convex(np.random.default_rng(5), grid, "needle-valley")
    b = sample_convex(np.random.default_rng(5), grid, "needle-valley")
    assert np.array_equal(a.values, b.values)
    with pytest.raises(ValueError):
        sample_convex(np.random.default_rng(5), grid, "wiggly")


@pytest.mark.parametrize("family", FAMILIES)
def test_every_family_is_convex_into_unit_interval(family):
    rng = np.random.default_rng(3)
    grid = Grid.uniform(64)
    n = 10_000 if family == "random-slopes" else 1_000
    for _ in range(n):
        f = make_convex(rng, family)
        assert f.is_convex()
        assert 0.0 <= f.ys.min() and f.ys.max() <= 1.0 + 1e-12
    assert validate_convex(f.on(grid))


def test_function_csv_round_trip(tmp_path):
    f = gf(np.random.default_rng(4).uniform(size=7))
    write_function_csv(f, tmp_path / "f.csv")
    g = read_function_csv(tmp_path / "f.csv")
    assert np.array_equal(g.values, f.values)
    assert g.grid.same_as(f.grid)
    seq = [gf(np.random.default_rng(s).uniform(size=5)) for s in range(3)]
    write_sequence_csv(seq, tmp_path / "s.csv")
    back = read_sequence_csv(tmp_path / "s.csv")
    assert all(np.array_equal(a.values, b.values) for a, b in zip(seq, back))
