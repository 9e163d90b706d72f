"""Machine checks for the structural inequalities used by the regret analysis.

* the local-to-global inequality for pairs of convex functions,
* the per-round weight system and the two inequalities built on it,
* discretization of convex functions on nets of [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .convexfn import (
    DiscreteMeasure,
    Grid,
    GridFunction,
    PiecewiseLinear,
)

LEMMA_TOL = 1e-12


class HypothesisNotSatisfied(ValueError):
    pass


class LemmaViolation(AssertionError):
    pass


# --------------------------------------------------------------------------
# local-to-global
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class L2GInstance:
    f: GridFunction
    g: GridFunction
    x_index: int
    xstar_index: int
    nu: DiscreteMeasure

    def __post_init__(self):
        if not (self.f.grid.same_as(self.g.grid) and self.f.grid.same_as(self.nu.grid)):
            raise ValueError("grid mismatch")
        lo, hi = sorted((self.x_index, self.xstar_index))
        outside = np.ones(len(self.f), bool)
        outside[lo:hi + 1] = False
        if np.any(self.nu.masses[outside] > 0):
            raise ValueError("nu must be supported between x* and x")


def l2g_sides(f, g, nu, x_index, xstar_index):
    """Both sides of the inequality, row-wise for 2-D inputs.

    lhs = ||f - g||_nu^2 / (f(x) - g(x))^2
    rhs = nu(x*) ||f - f*||_nu^2 / (f(x) - f*)^2
    """
    f = np.atleast_2d(f)
    g = np.atleast_2d(g)
    nu = np.atleast_2d(nu)
    rows = np.arange(f.shape[0])
    x = np.broadcast_to(x_index, rows.shape)
    xs = np.broadcast_to(xstar_index, rows.shape)
    fstar = f[rows, xs]
    fx, gx = f[rows, x], g[rows, x]
    d = f - g
    lhs = (nu * d * d).sum(axis=1) / (fx - gx) ** 2
    e = f - fstar[:, None]
    rhs = nu[rows, xs] * (nu * e * e).sum(axis=1) / (fx - fstar) ** 2
    return lhs, rhs


def check_local_to_global(inst: L2GInstance):
    f, g = inst.f.values, inst.g.values
    fstar = f[inst.xstar_index]
    if fstar > f.min():
        raise HypothesisNotSatisfied("hypothesis not satisfied: x* does not minimize f")
    if not (g[inst.x_index] <= fstar < f[inst.x_index]):
        raise HypothesisNotSatisfied("hypothesis not satisfied")
    lhs, rhs = l2g_sides(f, g, inst.nu.masses, inst.x_index, inst.xstar_index)
    lhs, rhs = float(lhs[0]), float(rhs[0])
    return lhs, rhs, lhs >= rhs - LEMMA_TOL


def _random_convex_rows(rng, pts, n):
    """n random discrete-convex rows on ``pts`` (values roughly in [0, 1])."""
    K = pts.size
    slopes = np.sort(rng.normal(size=(n, K - 1)) * rng.exponential(1.0, size=(n, 1)), axis=1)
    # sparse slope changes give piecewise-linear shapes with long flat stretches
    sparse = rng.uniform(size=n) < 0.5
    keep = rng.uniform(size=(n, K - 1)) < 0.15
    kinks = np.where(keep, rng.normal(size=(n, K - 1)), 0.0)
    kinks[:, 0] = rng.normal(size=n)
    alt = np.cumsum(np.abs(kinks), axis=1) - rng.uniform(0, 2, size=(n, 1))
    slopes = np.where(sparse[:, None], alt, slopes)
    vals = np.concatenate([np.zeros((n, 1)), np.cumsum(slopes * np.diff(pts), axis=1)], axis=1)
    vals -= vals.min(axis=1, keepdims=True)
    span = vals.max(axis=1, keepdims=True)
    span[span == 0] = 1.0
    return vals / span


def random_l2g_batch(rng: np.random.Generator, grid: Grid, n: int):
    """Random valid local-to-global instances as stacked arrays.

    Returns (F, G, NU, x_idx, xs_idx).  g is drawn three ways: a random
    convex function shifted below f*, the tight chord construction (a line
    through (x, f*) and a point of f between x* and x), and a line with a
    random dip below f* at x.
    """
    pts = grid.points
    K = pts.size
    F = _random_convex_rows(rng, pts, n)
    xs_idx = np.argmin(F, axis=1)
    fstar = F[np.arange(n), xs_idx]
    # pick x with f(x) clearly above f*
    ok = F > fstar[:, None] + 1e-6
    score = np.where(ok, rng.uniform(size=(n, K)), -1.0)
    x_idx = np.argmax(score, axis=1)
    valid = ok[np.arange(n), x_idx]
    rows = np.arange(n)
    fx = F[rows, x_idx]
    gap = fx - fstar

    kind = rng.integers(0, 3, size=n)
    dip = gap * rng.uniform(0, 1, size=n) ** 3
    dip = np.where(rng.uniform(size=n) < 0.3, 0.0, dip)
    gx = fstar - dip

    # kind 0: random convex g, shifted so g(x) = gx
    G0 = _random_convex_rows(rng, pts, n) * rng.uniform(0, 2, size=(n, 1))
    G0 += (gx - G0[rows, x_idx])[:, None]
    # kind 1: chord through (x, gx) and (x0, f(x0)) for x0 strictly between x* and x
    lo = np.minimum(xs_idx, x_idx)
    hi = np.maximum(xs_idx, x_idx)
    x0 = lo + np.floor(rng.uniform(size=n) * (hi - lo)).astype(int)
    x0 = np.where(x0 == x_idx, xs_idx, x0)
    denom = pts[x0] - pts[x_idx]
    denom = np.where(denom == 0, 1.0, denom)
    slope1 = (F[rows, x0] - gx) / denom
    G1 = gx[:, None] + slope1[:, None] * (pts[None, :] - pts[x_idx][:, None])
    # kind 2: random line through (x, gx)
    slope2 = rng.normal(size=n) * 3
    G2 = gx[:, None] + slope2[:, None] * (pts[None, :] - pts[x_idx][:, None])
    G = np.where((kind == 0)[:, None], G0, np.where((kind == 1)[:, None], G1, G2))

    # nu on [lo, hi]: random Dirichlet, sparse, or with a heavy atom at x*
    idx = np.arange(K)[None, :]
    inside = (idx >= lo[:, None]) & (idx <= hi[:, None])
    raw = rng.gamma(rng.choice([0.2, 1.0, 5.0], size=(n, 1)), size=(n, K))
    sparse = rng.uniform(size=(n, K)) < rng.uniform(0.05, 1.0, size=(n, 1))
    raw = np.where(sparse, raw, 0.0)
    raw = np.where(inside, raw, 0.0)
    atom = rng.choice([0.0, 0.5, 2.0, 50.0], size=n) * (raw.sum(axis=1) + 1e-12)
    raw[rows, xs_idx] += atom
    raw[rows, x_idx] += (raw.sum(axis=1) == 0)
    NU = raw / raw.sum(axis=1, keepdims=True)
    keep = valid
    return F[keep], G[keep], NU[keep], x_idx[keep], xs_idx[keep]


@dataclass(frozen=True)
class SearchResult:
    trials: int
    margins: np.ndarray        # ascending, at most ``keep`` entries
    worst: list                # L2GInstance for each reported margin
    violations: int
    min_margin: float
    min_ratio: float = math.inf   # smallest lhs/rhs over instances with rhs > 0


def search_violations(rng: np.random.Generator, grid: Grid, trials: int,
                      keep: int = 10, batch: int = 5000, strict: bool = True) -> SearchResult:
    """Randomized search for counterexamples to the local-to-global inequality."""
    if trials <= 0:
        return SearchResult(0, np.empty(0), [], 0, math.inf, math.inf)
    best = []           # (margin, F, G, NU, x, xs)
    violations = 0
    done = 0
    min_margin = math.inf
    min_ratio = math.inf
    while done < trials:
        F, G, NU, X, XS = random_l2g_batch(rng, grid, batch)
        take = min(F.shape[0], trials - done)
        F, G, NU, X, XS = F[:take], G[:take], NU[:take], X[:take], XS[:take]
        lhs, rhs = l2g_sides(F, G, NU, X, XS)
        margin = lhs - rhs
        violations += int(np.sum(margin < -LEMMA_TOL))
        min_margin = min(min_margin, float(margin.min()))
        pos = rhs > 0
        if pos.any():
            min_ratio = min(min_ratio, float(np.min(lhs[pos] / rhs[pos])))
        top = np.argsort(margin)[:keep]
        best.extend((float(margin[i]), F[i], G[i], NU[i], int(X[i]), int(XS[i])) for i in top)
        best.sort(key=lambda b: b[0])
        best = best[:keep]
        done += take
    if strict and violations:
        raise LemmaViolation(f"{violations} local-to-global violations, min margin {min_margin!r}")
    worst = [
        L2GInstance(GridFunction(grid, f), GridFunction(grid, g), x, xs,
                    DiscreteMeasure(grid, nu))
        for _, f, g, nu, x, xs in best
    ]
    return SearchResult(done, np.array([b[0] for b in best]), worst, violations, min_margin,
                        min_ratio)


# --------------------------------------------------------------------------
# per-round weight system
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class WeightSystem:
    S: np.ndarray          # candidate indices, ascending
    w: np.ndarray          # weight per entry of S
    eps_i: np.ndarray      # eps * |x_i - x*| per entry of S
    i_star: int

    def neighborhood(self, i: int, points) -> np.ndarray:
        """Indices of S lying in the closed interval between x_i and x*."""
        lo, hi = sorted((points[i], points[self.i_star]))
        xs = points[self.S]
        return self.S[(xs >= lo) & (xs <= hi)]


def build_weights(f, pi, S, i_star: int, eps: float, points) -> WeightSystem:
    """w_i = sum_{j in S_i} pi_j ((f_j - f* + eps_j) / (f_i - f* + eps_i))^2, w_{i*} = pi_{i*}."""
    f = np.asarray(f, dtype=float)
    pi = np.asarray(pi, dtype=float)
    points = np.asarray(points, dtype=float)
    S = np.sort(np.asarray(S, dtype=int))
    x_star = points[i_star]
    eps_i = eps * np.abs(points[S] - x_star)
    num = f[S] - f[i_star] + eps_i
    term = pi[S] * num * num
    w = np.empty(S.size)
    right = points[S] > x_star
    left = points[S] < x_star
    # S is sorted by position, so neighborhoods are prefix/suffix runs from x*
    r_cum = np.cumsum(np.where(right, term, 0.0))
    l_cum = np.cumsum(np.where(left, term, 0.0)[::-1])[::-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(right, r_cum / (num * num), np.where(left, l_cum / (num * num), 0.0))
    w[S == i_star] = pi[i_star]
    return WeightSystem(S, w, eps_i, int(i_star))


def build_weights_naive(f, pi, S, i_star, eps, points) -> np.ndarray:
    """Literal double loop over S and S_i; reference for ``build_weights``."""
    out = []
    x_star = points[i_star]
    for i in sorted(S):
        if i == i_star:
            out.append(pi[i_star])
            continue
        lo, hi = sorted((points[i], x_star))
        den = f[i] - f[i_star] + eps * abs(points[i] - x_star)
        total = 0.0
        for j in S:
            if lo <= points[j] <= hi:
                num = f[j] - f[i_star] + eps * abs(points[j] - x_star)
                total += pi[j] * (num / den) ** 2
        out.append(total)
    return np.array(out)


def check_l2bound(f, cond_rows, pi, ws: WeightSystem, eps: float, diag=None):
    """For each i in S: ||f - f_i||_pi^2 >= w_i (f(x_i) - f_i(x_i))^2 / 4 - eps^2.

    ``cond_rows[k]`` is the conditional mean loss for ``ws.S[k]``.
    Returns (lhs, rhs, holds) arrays aligned with ``ws.S``.
    """
    f = np.asarray(f, dtype=float)
    pi = np.asarray(pi, dtype=float)
    cond_rows = np.atleast_2d(np.asarray(cond_rows, dtype=float))
    if ws.S.size == 0:
        e = np.empty(0)
        return e, e, np.empty(0, bool)
    support = np.flatnonzero(pi)
    d = f[support][None, :] - cond_rows[:, support]
    lhs = (pi[support][None, :] * d * d).sum(axis=1)
    gap = f[ws.S] - cond_rows[np.arange(ws.S.size), ws.S]
    rhs = 0.25 * ws.w * gap * gap - eps * eps
    return lhs, rhs, lhs >= rhs - LEMMA_TOL


def log_sum_bound(K: int, eps: float) -> float:
    return 20.0 * math.log(2 * K / eps)


def check_log_sum(alpha, ws: WeightSystem, K: int, eps: float):
    alpha = np.asarray(alpha, dtype=float)
    total = float(np.sum(alpha[ws.S] / ws.w)) if ws.S.size else 0.0
    bound = log_sum_bound(K, eps)
    return total, bound, total <= bound + LEMMA_TOL


# --------------------------------------------------------------------------
# discretization
# --------------------------------------------------------------------------


def covering_radius(points) -> float:
    """Largest distance from a point of [0, 1] to the nearest of ``points``."""
    p = np.asarray(points, dtype=float)
    inner = np.diff(p).max() / 2 if p.size > 1 else 0.0
    return float(max(p[0], 1.0 - p[-1], inner))


def net_delta(eps: float, r: float = 0.5) -> float:
    return 0.25 * r * eps * eps


def uniform_net(delta: float) -> Grid:
    """Equally spaced points from 0 to 1 with spacing at most ``delta``."""
    n = int(math.ceil(1.0 / delta)) + 1
    return Grid(np.linspace(0.0, 1.0, n))


def _as_callable(f):
    if isinstance(f, PiecewiseLinear):
        return f, f.min_value
    if isinstance(f, GridFunction):
        return f, float(f.values.min())
    raise TypeError("f must be a PiecewiseLinear or GridFunction")


def discretization_gap(f, net: Grid) -> float:
    fn, ref_min = _as_callable(f)
    return float(np.min(fn(net.points))) - ref_min


def flaxman_ok(f, eps: float, r: float = 0.5, C: float = 1.0, n: int = 2001) -> bool:
    """|f(x) - f(y)| <= C/(r eps) |x - y| for x in the shrunk interval, y in [0, 1].

    For convex f the secant slope from x is monotone in y, so the worst y is
    an endpoint of [0, 1].
    """
    fn, _ = _as_callable(f)
    lo, hi = r * eps, 1.0 - r * eps
    if lo >= hi:
        return True
    x = np.linspace(lo, hi, n)
    if isinstance(f, PiecewiseLinear):
        inner = f.xs[(f.xs >= lo) & (f.xs <= hi)]
        x = np.union1d(x, inner)
    fx = fn(x)
    f0, f1 = float(fn(0.0)), float(fn(1.0))
    slope = np.maximum(np.abs(fx - f0) / x, np.abs(f1 - fx) / (1.0 - x))
    return bool(np.all(slope <= C / (r * eps) + 1e-9))


def check_discretization(f, net: Grid, eps: float, r: float = 0.5) -> bool:
    """min over the net <= min over [0, 1] + eps, plus the shrunk-interval Lipschitz check."""
    if covering_radius(net.points) > net_delta(eps, r) + 1e-15:
        raise ValueError("net violates δ ≤ ¼rε²")
    return discretization_gap(f, net) <= eps and flaxman_ok(f, eps, r)
