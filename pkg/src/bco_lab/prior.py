"""Finite-support priors over loss sequences and exact posteriors.

A prior is M scenarios, each a full sequence F_1..F_T of convex grid
functions.  Feedback is noiseless, so the likelihood of a scenario is the
indicator that it reproduces every observed loss; the posterior is the
prior restricted to the surviving scenarios.

Loss tables are generated on demand round by round (``FinitePrior.losses``)
instead of materialising the (M, T, K) cube, which would not fit in memory
at the horizons the experiments use.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .convexfn import (
    DiscreteMeasure,
    Grid,
    GridFunction,
    TOL_SUM,
    random_slopes,
    read_sequence_csv,
    write_sequence_csv,
)

ETA_MATCH = 1e-9

PRIOR_NAMES = ("iid-vee", "static-valley", "drifting-min", "needle")


class InconsistentObservation(ValueError):
    pass


def logsumexp(lw: np.ndarray) -> float:
    top = lw.max()
    if not np.isfinite(top):
        return top
    return float(top + np.log(np.exp(lw - top).sum()))


# --------------------------------------------------------------------------
# loss tables
# --------------------------------------------------------------------------


# A table is called as table(t, cols, rows) and returns the (rows, cols)
# block of round-t losses; ``None`` selects everything.


class DenseLosses:
    """Explicit (M, T, K) loss cube."""

    def __init__(self, cube):
        self.cube = np.asarray(cube, dtype=float)

    def __call__(self, t: int, cols=None, rows=None) -> np.ndarray:
        cube = self.cube if rows is None else self.cube[rows]
        if cols is None:
            return cube[:, t - 1, :]
        return cube[:, t - 1, cols]


class StaticLosses:
    """The same function in every round; ``values`` is (M, K)."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)

    def __call__(self, t: int, cols=None, rows=None) -> np.ndarray:
        vals = self.values if rows is None else self.values[rows]
        return vals if cols is None else vals[:, cols]


class MaxAffineLosses:
    """F_t^w(x) = max_p (slope[w,t,p] * x + icept[w,t,p]), clipped to [0, 1]."""

    def __init__(self, slopes, icepts):
        self.slopes = np.asarray(slopes, dtype=float)
        self.icepts = np.asarray(icepts, dtype=float)

    def bind_grid(self, grid_points):
        self.grid_points = np.asarray(grid_points, dtype=float)

    def __call__(self, t: int, cols=None, rows=None) -> np.ndarray:
        a = self.slopes[:, t - 1, :]
        b = self.icepts[:, t - 1, :]
        if rows is not None:
            a, b = a[rows], b[rows]
        x = self.grid_points if cols is None else self.grid_points[cols]
        x = np.atleast_1d(x)
        vals = a[:, 0, None] * x + b[:, 0, None]
        for p in range(1, a.shape[1]):
            np.maximum(vals, a[:, p, None] * x + b[:, p, None], out=vals)
        return np.clip(vals, 0.0, 1.0, out=vals)


@dataclass(frozen=True)
class Scenario:
    losses: tuple
    weight: float
    xstar_index: int


class FinitePrior:
    """M weighted scenarios sharing one grid and one horizon."""

    def __init__(self, grid: Grid, horizon: int, weights, table, name: str = "custom"):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("need at least one scenario")
        if np.any(w <= 0):
            raise ValueError("scenario weights must be positive")
        if abs(w.sum() - 1.0) > TOL_SUM:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        self.grid = grid
        self.horizon = int(horizon)
        self.weights = w
        self.table = table
        if hasattr(table, "bind_grid"):
            table.bind_grid(grid.points)
        self.name = name
        self._xstar = None

    @classmethod
    def from_cube(cls, grid: Grid, cube, weights=None, name="custom") -> "FinitePrior":
        cube = np.asarray(cube, dtype=float)
        M, T, K = cube.shape
        if K != len(grid):
            raise ValueError("cube width does not match the grid")
        if weights is None:
            weights = np.full(M, 1.0 / M)
        return cls(grid, T, weights, DenseLosses(cube), name)

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def K(self) -> int:
        return len(self.grid)

    def losses(self, t: int, rows=None, cols=None) -> np.ndarray:
        """Round-t losses as a (scenarios, arms) array; ``t`` is 1-based."""
        if not 1 <= t <= self.horizon:
            raise IndexError(f"round {t} outside 1..{self.horizon}")
        return self.table(t, cols, rows)

    def cumulative(self) -> np.ndarray:
        total = np.zeros((self.size, self.K))
        if isinstance(self.table, StaticLosses):
            return self.horizon * self.table.values
        for t in range(1, self.horizon + 1):
            total += self.losses(t)
        return total

    @property
    def xstar(self) -> np.ndarray:
        """Grid argmin of each scenario's cumulative loss (smallest index on ties)."""
        if self._xstar is None:
            xs = np.argmin(self.cumulative(), axis=1)
            xs.flags.writeable = False
            self._xstar = xs
        return self._xstar

    def scenario(self, m: int) -> Scenario:
        fns = tuple(
            GridFunction(self.grid, self.losses(t)[m]) for t in range(1, self.horizon + 1)
        )
        return Scenario(fns, float(self.weights[m]), int(self.xstar[m]))


# --------------------------------------------------------------------------
# named prior generators
# --------------------------------------------------------------------------


def _vee_pieces(kink, height, floor):
    scale = height / np.maximum(kink, 1.0 - kink)
    slopes = np.stack([-scale, scale], axis=-1)
    icepts = np.stack([floor + scale * kink, floor - scale * kink], axis=-1)
    return slopes, icepts


def build_prior(name: str, grid: Grid, T: int, M: int, rng: np.random.Generator) -> FinitePrior:
    """Named generator.

    * ``iid-vee``: every round an independent vee whose kink is one of 15
      lattice sites, so a single observation rarely pins the scenario down.
    * ``static-valley``: one random piecewise-linear convex function, repeated.
    * ``drifting-min``: a vee whose kink random-walks on a 17-site lattice.
    * ``needle``: a steep valley near a boundary, repeated.
    """
    weights = rng.dirichlet(np.full(M, 2.0))
    weights = weights / weights.sum()
    pts = grid.points
    if name == "iid-vee":
        kink = rng.integers(1, 16, size=(M, T)) / 16.0
        height = np.full((M, T), 0.8)
        floor = np.full((M, T), 0.1)
        table = MaxAffineLosses(*_vee_pieces(kink, height, floor))
    elif name == "static-valley":
        vals = np.stack([random_slopes(rng)(pts) for _ in range(M)])
        table = StaticLosses(np.clip(vals, 0.0, 1.0))
    elif name == "drifting-min":
        steps = rng.choice([-1, 0, 1], size=(M, T))
        start = rng.integers(0, 17, size=M)
        pos = np.empty((M, T), dtype=int)
        cur = start.copy()
        for t in range(T):
            cur = cur + steps[:, t]
            cur = np.where(cur < 0, 1, np.where(cur > 16, 15, cur))
            pos[:, t] = cur
        kink = pos / 16.0
        height = np.full((M, T), 0.7)
        floor = np.full((M, T), 0.2)
        table = MaxAffineLosses(*_vee_pieces(kink, height, floor))
    elif name == "needle":
        depth = rng.uniform(0.3, 1.0, size=M)
        width = np.exp(rng.uniform(math.log(1e-3), math.log(0.1), size=M))
        center = rng.uniform(0.0, 1.0, size=M) * width
        right = rng.uniform(size=M) < 0.5
        rise = rng.uniform(0.2, 1.0, size=M)
        base = 1.0 - depth
        steep = depth / width
        gentle = rise * depth / (1.0 - center)
        # left needle: max(base + steep*(c - x), base + gentle*(x - c))
        s1 = np.where(right, -gentle, -steep)
        s2 = np.where(right, steep, gentle)
        c = np.where(right, 1.0 - center, center)
        slopes = np.stack([s1, s2], axis=-1)
        icepts = np.stack([base - s1 * c, base - s2 * c], axis=-1)
        slopes = np.repeat(slopes[:, None, :], T, axis=1)
        icepts = np.repeat(icepts[:, None, :], T, axis=1)
        table = MaxAffineLosses(slopes, icepts)
    else:
        raise ValueError(f"unknown prior {name!r}; choose from {PRIOR_NAMES}")
    return FinitePrior(grid, T, weights, table, name=name)


def save_prior(prior: FinitePrior, directory) -> None:
    """Write one ``t,x,value`` CSV per scenario plus ``manifest.csv``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "manifest.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario_file", "weight"])
        for m in range(prior.size):
            fname = f"scenario_{m:05d}.csv"
            write_sequence_csv(prior.scenario(m).losses, d / fname)
            w.writerow([fname, repr(float(prior.weights[m]))])


def load_prior(directory) -> FinitePrior:
    d = Path(directory)
    manifest = d / "manifest.csv"
    if not manifest.exists():
        raise FileNotFoundError(f"prior manifest not found: {manifest}")
    with open(manifest, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{manifest}: no scenarios listed")
    grid = None
    cube = []
    for r in rows:
        seq = read_sequence_csv(d / r["scenario_file"], grid)
        grid = seq[0].grid
        cube.append([f.values for f in seq])
    horizons = {len(c) for c in cube}
    if len(horizons) != 1:
        raise ValueError(f"{manifest}: scenarios have different horizons")
    w = np.array([float(r["weight"]) for r in rows])
    return FinitePrior.from_cube(grid, np.array(cube), w / w.sum(), name=str(d))


# --------------------------------------------------------------------------
# posterior
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Posterior:
    """Log posterior weights; eliminated scenarios carry ``-inf``."""

    prior: FinitePrior
    log_weights: np.ndarray

    @classmethod
    def initial(cls, prior: FinitePrior) -> "Posterior":
        lw = np.log(prior.weights)
        lw.flags.writeable = False
        return cls(prior, lw)

    @property
    def alive(self) -> np.ndarray:
        return np.isfinite(self.log_weights)

    def weights(self) -> np.ndarray:
        lw = self.log_weights
        return np.exp(lw - logsumexp(lw))

    def update(self, round: int, arm_index: int, observed_loss: float) -> "Posterior":
        return update(self, round, arm_index, observed_loss)


def update(post: Posterior, round: int, arm_index: int, observed_loss: float) -> Posterior:
    """Bayes rule with indicator likelihood |F_round(x_arm) - loss| <= ETA_MATCH."""
    prior = post.prior
    if not 1 <= round <= prior.horizon:
        raise IndexError(f"round {round} outside 1..{prior.horizon}")
    if not 0.0 <= observed_loss <= 1.0:
        raise ValueError("observed loss must lie in [0, 1]")
    alive = np.flatnonzero(post.alive)
    col = prior.losses(round, rows=alive, cols=[arm_index])[:, 0]
    keep = np.zeros(prior.size, dtype=bool)
    keep[alive[np.abs(col - observed_loss) <= ETA_MATCH]] = True
    if not keep.any():
        raise InconsistentObservation("inconsistent observation")
    lw = np.where(keep, post.log_weights, -np.inf)
    lw = lw - logsumexp(lw)
    lw.flags.writeable = False
    return Posterior(prior, lw)


@dataclass(frozen=True, eq=False)
class RoundStats:
    """Posterior summaries for one round, restricted to alive scenarios.

    ``groups`` are the distinct optimum indices among alive scenarios and
    ``cond[g]`` is the conditional mean loss given X* = x_{groups[g]}.
    """

    t: int
    p: np.ndarray          # (m,) alive posterior weights
    losses: np.ndarray     # (m, K) alive round-t losses
    xs: np.ndarray         # (m,) alive optimum indices
    alpha: np.ndarray      # (K,)
    mean: np.ndarray       # (K,)
    groups: np.ndarray     # (G,)
    group_of: np.ndarray   # (m,) index into groups
    group_mass: np.ndarray  # (G,)
    cond: np.ndarray       # (G, K)
    diag: np.ndarray       # (K,) f_{i,t}(x_i), with f_t(x_i) where alpha_i = 0

    def cond_row(self, j: int) -> np.ndarray:
        hit = np.flatnonzero(self.groups == j)
        if hit.size == 0:
            return self.mean
        return self.cond[hit[0]]


def round_stats(post: Posterior, t: int) -> RoundStats:
    prior = post.prior
    alive = np.flatnonzero(post.alive)
    lw = post.log_weights[alive]
    p = np.exp(lw - logsumexp(lw))
    losses = prior.losses(t, rows=alive)
    xs = prior.xstar[alive]
    K = prior.K
    alpha = np.bincount(xs, weights=p, minlength=K)
    mean = p @ losses
    groups, group_of = np.unique(xs, return_inverse=True)
    group_mass = np.bincount(group_of, weights=p, minlength=groups.size)
    if groups.size == 1:
        cond = mean[None, :]
    else:
        onehot = np.zeros((groups.size, alive.size))
        onehot[group_of, np.arange(alive.size)] = p
        cond = (onehot @ losses) / group_mass[:, None]
    diag = mean.copy()
    diag[groups] = cond[np.arange(groups.size), groups]
    return RoundStats(t, p, losses, xs, alpha, mean, groups, group_of, group_mass, cond, diag)


def alpha(post: Posterior) -> DiscreteMeasure:
    """Posterior law of the hindsight optimum X*."""
    prior = post.prior
    w = post.weights()
    masses = np.bincount(prior.xstar, weights=w, minlength=prior.K)
    return DiscreteMeasure(prior.grid, masses / masses.sum())


def mean_loss(post: Posterior, round: int) -> GridFunction:
    return GridFunction(post.prior.grid, post.weights() @ post.prior.losses(round))


def cond_loss(post: Posterior, round: int, j: int) -> GridFunction:
    """E[F_round | X* = x_j] under the posterior; falls back to the mean if P(X* = x_j) = 0."""
    st = round_stats(post, round)
    return GridFunction(post.prior.grid, st.cond_row(j))
