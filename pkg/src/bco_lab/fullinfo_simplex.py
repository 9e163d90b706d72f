"""Full-information Bayesian play on the probability simplex.

The strategy plays ``X_t = E[X* | F_1, ..., F_{t-1}]``, the posterior mean of
the hindsight optimum.  A prior is a finite set of weighted scenarios; each
scenario is a path through per-round pools of max-of-affine losses, so the
history after t rounds is exactly the set of scenarios sharing the first t
pool choices.  Everything below is computed by enumerating those prefix
classes, which is exact because the policy is deterministic given the
observed losses.

``X_{T+1}`` is set to ``X*`` (the posterior after all T losses is a point
mass on the path, and X* is a function of the path).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TOL_MARTINGALE = 1e-9
TOL_TV = 1e-9
MESH_SIZE = 200
EXACT_MAX_M = 1000
EXACT_MAX_T = 50


@dataclass(frozen=True, eq=False)
class MaxAffine:
    """x -> max_p (G[p] . x + c[p]) with every gradient in the unit inf-ball."""

    G: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        if self.G.ndim != 2 or self.G.shape[0] != self.c.size:
            raise ValueError("G must be (pieces, n) and c must have one entry per piece")
        if np.max(np.abs(self.G)) > 1.0 + 1e-12:
            raise ValueError("gradient inf-norm exceeds 1 (not 1-Lipschitz in L1)")

    @property
    def n(self) -> int:
        return self.G.shape[1]

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.max(x @ self.G.T + self.c, axis=-1)

    def range_on_simplex(self) -> tuple[float, float]:
        """Exact bounds of the function over the simplex.

        The max is attained at a vertex; the min is only bounded below by
        the smallest piece-wise vertex value, which is enough for a [0, 1]
        certificate.
        """
        vert = self.G.T + self.c           # (n, pieces): piece values at vertices
        return float(vert.min()), float(vert.max(axis=1).max())


def random_max_affine(rng: np.random.Generator, n: int, pieces: int | None = None) -> MaxAffine:
    """Random max-of-affine loss mapping the simplex into [0, 1]."""
    if pieces is None:
        pieces = int(rng.integers(1, 6))
    G = rng.uniform(-1.0, 1.0, size=(pieces, n))
    spread = G.max(axis=1) - G.min(axis=1)
    target = rng.uniform(0.0, 1.0, size=pieces)
    scale = np.where(spread > target, target / np.where(spread > 0, spread, 1.0), 1.0)
    G = G * scale[:, None]
    lo, hi = -G.min(axis=1), 1.0 - G.max(axis=1)
    c = lo + rng.uniform(size=pieces) * (hi - lo)
    return MaxAffine(G, c)


def candidate_points(n: int, rng: np.random.Generator, mesh: int = MESH_SIZE) -> np.ndarray:
    """Vertices plus a Dirichlet(1) mesh, sorted lexicographically."""
    pts = np.vstack([np.eye(n), rng.dirichlet(np.ones(n), size=mesh)])
    order = np.lexsort(pts.T[::-1])
    return pts[order]


@dataclass
class SimplexPrior:
    """``pools[t]`` is the list of losses available at round t (0-based);
    scenario m plays ``pools[t][paths[m, t]]``."""

    n: int
    pools: list
    paths: np.ndarray
    weights: np.ndarray
    candidates: np.ndarray
    name: str = "random"
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.paths = np.asarray(self.paths, dtype=int)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.paths.shape != (self.weights.size, len(self.pools)):
            raise ValueError("paths must be (M, T) with one weight per scenario")
        if np.any(self.weights <= 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be positive and sum to 1")
        for t, pool in enumerate(self.pools):
            if self.paths[:, t].max() >= len(pool):
                raise ValueError(f"path index out of range in round {t + 1}")
            for f in pool:
                if f.n != self.n:
                    raise ValueError("loss dimension differs from n")
                lo, hi = f.range_on_simplex()
                if lo < -1e-12 or hi > 1 + 1e-12:
                    raise ValueError("loss leaves [0, 1] on the simplex")

    @property
    def T(self) -> int:
        return len(self.pools)

    @property
    def M(self) -> int:
        return self.weights.size

    def pool_values(self, t: int, x: np.ndarray) -> np.ndarray:
        """(len(pool), len(x)) values of each round-t loss (0-based t)."""
        return np.stack([f(x) for f in self.pools[t]])

    def scenario_losses(self, x: np.ndarray) -> np.ndarray:
        """(M, T, len(x)) losses of every scenario at the points ``x``."""
        x = np.atleast_2d(x)
        out = np.empty((self.M, self.T, x.shape[0]))
        for t in range(self.T):
            out[:, t] = self.pool_values(t, x)[self.paths[:, t]]
        return out

    @property
    def xstar(self) -> np.ndarray:
        """(M, n) hindsight optimum over the candidate set, first in lex order on ties."""
        if "xstar" not in self._cache:
            cum = np.zeros((self.M, self.candidates.shape[0]))
            for t in range(self.T):
                cum += self.pool_values(t, self.candidates)[self.paths[:, t]]
            self._cache["xstar"] = self.candidates[np.argmin(cum, axis=1)]
        return self._cache["xstar"]


def random_simplex_prior(rng: np.random.Generator, n: int, T: int, M: int,
                         pool_size: int | None = None, name: str = "random") -> SimplexPrior:
    if pool_size is None:
        pool_size = int(rng.integers(2, 4))
    pools = [[random_max_affine(rng, n) for _ in range(pool_size)] for _ in range(T)]
    paths = rng.integers(0, pool_size, size=(M, T))
    weights = rng.dirichlet(np.full(M, 2.0))
    return SimplexPrior(n, pools, paths, weights, candidate_points(n, rng), name)


def prefix_classes(paths: np.ndarray, k: int) -> np.ndarray:
    """Class id of each scenario given the first ``k`` observed losses."""
    if k == 0:
        return np.zeros(paths.shape[0], dtype=int)
    _, inv = np.unique(paths[:, :k], axis=0, return_inverse=True)
    return inv.ravel()


def class_mean(values: np.ndarray, weights: np.ndarray, classes: np.ndarray) -> np.ndarray:
    """Per-scenario posterior mean of ``values`` within its class."""
    n_cls = classes.max() + 1
    mass = np.bincount(classes, weights=weights, minlength=n_cls)
    sums = np.stack([np.bincount(classes, weights=weights * v, minlength=n_cls)
                     for v in np.atleast_2d(values.T)], axis=1)
    return (sums / mass[:, None])[classes]


def doob_path(prior: SimplexPrior) -> np.ndarray:
    """(T + 1, M, n): X_t for every scenario, with X_{T+1} = X*."""
    xs = prior.xstar
    out = np.empty((prior.T + 1, prior.M, prior.n))
    for k in range(prior.T + 1):
        out[k] = class_mean(xs, prior.weights, prefix_classes(prior.paths, k))
    out[prior.T] = xs
    return out


def doob_step(prior: SimplexPrior, t: int, history) -> np.ndarray:
    """X_t given the pool indices observed in rounds 1..t-1."""
    history = np.asarray(history, dtype=int).reshape(-1)
    if history.size != t - 1:
        raise ValueError("history must hold the t - 1 observed pool indices")
    mask = np.all(prior.paths[:, : t - 1] == history, axis=1)
    if not mask.any():
        raise ValueError("history has zero prior probability")
    w = prior.weights[mask]
    return (w @ prior.xstar[mask]) / w.sum()


@dataclass
class FullInfoReport:
    n: int
    T: int
    lhs_tv: np.ndarray        # E[F_t(X_t) - F_t(X*)] per round
    rhs_tv: np.ndarray        # E[|X_t - X_{t+1}|_1] per round
    martingale_gap: float
    simplex_gap: float
    mode: str = "exact"

    @property
    def cum_tv(self) -> np.ndarray:
        return np.cumsum(self.rhs_tv)

    @property
    def regret(self) -> float:
        return float(self.lhs_tv.sum())

    @property
    def total_variation(self) -> float:
        return float(self.rhs_tv.sum())

    @property
    def neyman_bound(self) -> float:
        return neyman_bound(self.T, self.n)

    def tv_holds(self) -> np.ndarray:
        return self.lhs_tv <= self.rhs_tv + TOL_TV

    @property
    def martingale_ok(self) -> bool:
        return self.martingale_gap <= TOL_MARTINGALE


def neyman_bound(T: int, n: int) -> float:
    return math.sqrt(0.5 * T * math.log(n))


def martingale_gap(prior: SimplexPrior, X: np.ndarray) -> float:
    """max over reachable histories of |E[X_{t+1} | H_t] - X_t|_inf."""
    worst = 0.0
    for k in range(prior.T):
        cls = prefix_classes(prior.paths, k)
        nxt = class_mean(X[k + 1], prior.weights, cls)
        worst = max(worst, float(np.max(np.abs(nxt - X[k]))))
    return worst


def analyse(prior: SimplexPrior, mode: str = "exact", rng: np.random.Generator | None = None,
            samples: int = 2000) -> FullInfoReport:
    """Per-round regret and movement of the Doob strategy.

    ``exact`` weights every scenario by its prior mass.  ``mc`` replaces the
    expectation by an average over ``samples`` scenario draws; the Doob
    points themselves are still exact.
    """
    if mode == "exact" and (prior.M > EXACT_MAX_M or prior.T > EXACT_MAX_T):
        raise ValueError(f"exact mode needs M <= {EXACT_MAX_M} and T <= {EXACT_MAX_T}; use mode='mc'")
    X = doob_path(prior)
    xs = prior.xstar
    if mode == "exact":
        w = prior.weights
        rows = np.arange(prior.M)
    elif mode == "mc":
        rng = np.random.default_rng(0) if rng is None else rng
        rows = rng.choice(prior.M, size=samples, p=prior.weights)
        w = np.full(samples, 1.0 / samples)
    else:
        raise ValueError("mode must be 'exact' or 'mc'")
    lhs = np.empty(prior.T)
    rhs = np.empty(prior.T)
    for t in range(prior.T):
        idx = prior.paths[rows, t]
        cols = np.arange(rows.size)
        f_play = prior.pool_values(t, X[t, rows])[idx, cols]
        f_star = prior.pool_values(t, xs[rows])[idx, cols]
        lhs[t] = w @ (f_play - f_star)
        rhs[t] = w @ np.abs(X[t, rows] - X[t + 1, rows]).sum(axis=1)
    simplex_gap = float(max(np.max(-X), np.max(np.abs(X.sum(axis=2) - 1.0))))
    return FullInfoReport(prior.n, prior.T, lhs, rhs, martingale_gap(prior, X), simplex_gap, mode)


def check_lemma_tv(prior: SimplexPrior):
    """Per-round (lhs, rhs, holds) of  E[F_t(X_t) - F_t(X*)] <= E|X_t - X_{t+1}|_1."""
    rep = analyse(prior)
    return rep.lhs_tv, rep.rhs_tv, rep.tv_holds()


def check_neyman_bound(prior: SimplexPrior) -> tuple[float, float]:
    rep = analyse(prior)
    return rep.total_variation, rep.neyman_bound


def two_point_reveal(n: int = 2) -> SimplexPrior:
    """T = 1, two equiprobable scenarios whose single loss reveals X*.

    Scenario 0 plays x -> x[1] (minimised at e_1), scenario 1 plays
    x -> x[0] (minimised at e_2); X_1 is the midpoint and X_2 a vertex.
    """
    G0 = np.zeros((1, n)); G0[0, 1] = 1.0
    G1 = np.zeros((1, n)); G1[0, 0] = 1.0
    pools = [[MaxAffine(G0, np.zeros(1)), MaxAffine(G1, np.zeros(1))]]
    return SimplexPrior(n, pools, np.array([[0], [1]]), np.array([0.5, 0.5]), np.eye(n), "two-point")
