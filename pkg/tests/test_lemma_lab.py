import math

import numpy as np
import pytest

from bco_lab.convexfn import FAMILIES, DiscreteMeasure, Grid, GridFunction, make_convex, needle_valley
from bco_lab.lemma_lab import (
    HypothesisNotSatisfied,
    L2GInstance,
    LemmaViolation,
    build_weights,
    build_weights_naive,
    check_discretization,
    check_l2bound,
    check_local_to_global,
    check_log_sum,
    covering_radius,
    net_delta,
    search_violations,
    uniform_net,
)

G4 = Grid.uniform(4)


def test_l2g_hand_example():
    f = GridFunction(G4, np.abs(G4.points - 0.5))
    g = GridFunction(G4, np.zeros(4))
    nu = DiscreteMeasure(G4, [0, 1 / 3, 1 / 3, 1 / 3])
    lhs, rhs, ok = check_local_to_global(L2GInstance(f, g, 3, 1, nu))
    assert lhs == pytest.approx(0.41667, abs=1e-5)
    assert rhs == pytest.approx(0.13889, abs=1e-5)
    assert ok


def test_l2g_point_mass_at_optimum():
    f = GridFunction(G4, np.abs(G4.points - 0.5))
    g = GridFunction(G4, [0.1, -0.1, -0.2, -0.3])
    lhs, rhs, ok = check_local_to_global(L2GInstance(f, g, 3, 1, DiscreteMeasure.point_mass(G4, 1)))
    assert rhs == 0.0 and lhs == pytest.approx(0.01 / 0.64) and ok


def test_l2g_hypothesis_and_support_errors():
    f = GridFunction(G4, np.abs(G4.points - 0.5))
    g = GridFunction(G4, np.full(4, 0.3))
    nu = DiscreteMeasure.point_mass(G4, 2)
    with pytest.raises(HypothesisNotSatisfied, match="hypothesis not satisfied"):
        check_local_to_global(L2GInstance(f, g, 3, 1, nu))
    with pytest.raises(ValueError):
        L2GInstance(f, g, 3, 1, DiscreteMeasure.point_mass(G4, 0))


def test_l2g_chord_sweep():
    rng = np.random.default_rng(0)
    grid = Grid.uniform(30)
    pts = grid.points
    for _ in range(10_000):
        f = make_convex(rng, "random-slopes").on(grid).values
        xs = int(np.argmin(f))
        x = int(rng.integers(30))
        if f[x] <= f[xs]:
            continue
        # chord of f from x* to x, shifted so g(x) = f*
        slope = (f[x] - f[xs]) / (pts[x] - pts[xs])
        g = f[xs] + slope * (pts - pts[x])
        lo, hi = sorted((x, xs))
        raw = np.zeros(30)
        raw[lo:hi + 1] = rng.dirichlet(np.ones(hi - lo + 1))
        inst = L2GInstance(GridFunction(grid, f), GridFunction(grid, g), x, xs, DiscreteMeasure(grid, raw))
        assert check_local_to_global(inst)[2]


def test_search_violations_contract():
    empty = search_violations(np.random.default_rng(0), Grid.uniform(50), 0)
    assert empty.trials == 0 and empty.margins.size == 0 and empty.worst == []
    res = search_violations(np.random.default_rng(1), Grid.uniform(50), 20_000)
    assert res.violations == 0
    assert np.all(res.margins >= -1e-12)
    assert np.all(np.diff(res.margins) >= 0)
    assert len(res.worst) == res.margins.size == 10


def test_search_violations_strict_raises(monkeypatch):
    import bco_lab.lemma_lab as ll

    def fake_sides(F, G, NU, X, XS):
        return np.zeros(F.shape[0]), np.ones(F.shape[0])

    monkeypatch.setattr(ll, "l2g_sides", fake_sides)
    with pytest.raises(LemmaViolation):
        ll.search_violations(np.random.default_rng(0), Grid.uniform(10), 100)


def test_build_weights_examples():
    pts = Grid.uniform(3).points
    f = np.array([0.0, 0.1, 0.4])
    pi = np.array([0.7, 0.15, 0.15])
    ws = build_weights(f, pi, [0, 1, 2], 0, 0.0, pts)
    assert ws.w[0] == 0.7
    assert ws.w[1] == pytest.approx(0.15)
    assert ws.w[2] == pytest.approx(0.15 * (0.1 / 0.4) ** 2 + 0.15)
    ws = build_weights(f, pi, [0, 1, 2], 0, 0.1, pts)
    e1, e2 = 0.1 / 3, 0.2 / 3
    assert ws.w[2] == pytest.approx(0.15 * ((0.1 + e1) / (0.4 + e2)) ** 2 + 0.15)


def test_build_weights_matches_naive_and_dominates_pi():
    rng = np.random.default_rng(2)
    for _ in range(500):
        K = int(rng.integers(2, 25))
        pts = Grid.uniform(K).points
        f = make_convex(rng, "random-slopes").on(Grid.uniform(K)).values
        i_star = int(np.argmin(f))
        S = np.flatnonzero(rng.uniform(size=K) < 0.5)
        pi = rng.dirichlet(np.ones(K))
        eps = rng.uniform(0.01, 0.5)
        ws = build_weights(f, pi, S, i_star, eps, pts)
        assert np.allclose(ws.w, build_weights_naive(f, pi, S, i_star, eps, pts), rtol=1e-12)
        off = ws.S != i_star
        assert np.all(ws.w[off] >= pi[ws.S[off]] * (1 - 1e-12))


def test_l2bound_single_scenario_and_log_sum():
    pts = Grid.uniform(5).points
    f = np.array([0.4, 0.2, 0.1, 0.3, 0.6])
    pi = np.zeros(5)
    pi[2] = 1.0
    ws = build_weights(f, pi, [2], 2, 0.1, pts)
    lhs, rhs, ok = check_l2bound(f, f[None, :], pi, ws, 0.1)
    assert lhs[0] == 0.0 and rhs[0] == pytest.approx(-0.01) and ok.all()
    alpha = np.zeros(5)
    alpha[2] = 1.0
    total, bound, ok = check_log_sum(alpha, build_weights(f, np.array([0, 0, 0.5, 0.5, 0]), [2], 2, 0.1, pts), 5, 0.1)
    assert total == pytest.approx(2.0) and total <= bound and ok
    empty = build_weights(f, pi, [], 2, 0.1, pts)
    assert check_log_sum(alpha, empty, 5, 0.1)[0] == 0.0


def test_net_delta_and_covering():
    assert net_delta(0.2) == pytest.approx(0.005)
    net = uniform_net(net_delta(0.1))
    assert covering_radius(net.points) <= net_delta(0.1)
    with pytest.raises(ValueError):
        check_discretization(make_convex(np.random.default_rng(0), "vee"), Grid.uniform(4), 0.1)


def test_discretization_examples():
    eps = 0.1
    net = uniform_net(net_delta(eps))
    const = make_convex(np.random.default_rng(0), "chord-linear(0.4, 0.4)")
    assert check_discretization(const, net, eps)
    needle = needle_valley(0.9, 1e-3, 5e-4, "left", rise=1.0)
    assert check_discretization(needle, net, eps)


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("eps", [0.2, 0.1, 0.05])
def test_discretization_families(family, eps):
    rng = np.random.default_rng(3)
    net = uniform_net(net_delta(eps))
    assert all(check_discretization(make_convex(rng, family), net, eps) for _ in range(300))


def test_uniform_grid_min_gap_two_eps():
    # the K = 1/eps^2 grid i/K loses at most 2 eps against the continuum
    rng = np.random.default_rng(4)
    for eps in (0.2, 0.1):
        pts = Grid.uniform(math.ceil(1 / eps ** 2)).points
        for fam in FAMILIES:
            for _ in range(2500):
                f = make_convex(rng, fam)
                assert float(np.min(f(pts))) - f.min_value <= 2 * eps
