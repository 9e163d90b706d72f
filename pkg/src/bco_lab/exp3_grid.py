"""Exp3 over a finite grid of [0, 1] against oblivious convex adversaries.

The geometric grid {eps (1+eps)^k, 1 - eps (1+eps)^k} puts points densely
near both ends, where convex functions can be steep, and sparsely in the
middle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .convexfn import Grid, PiecewiseLinear, chord_linear, make_convex, needle_valley, vee

FINE_POINTS = 100_001
ADVERSARIES = ("constant", "static-valley", "needle", "drifting-vee", "chord")


# --------------------------------------------------------------------------
# grids
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GeometricGrid:
    eps: float
    points: np.ndarray

    def __len__(self) -> int:
        return self.points.size

    def as_grid(self) -> Grid:
        return Grid(self.points)


def build_geometric_grid(eps: float) -> GeometricGrid:
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    pts = []
    k = 0
    while True:
        x = eps * (1.0 + eps) ** k
        if x > 1.0:
            break
        pts.append(x)
        pts.append(1.0 - x)
        k += 1
    pts = np.sort(np.clip(np.array(pts), 0.0, 1.0))
    keep = np.concatenate(([True], np.diff(pts) > 1e-12))
    pts = pts[keep]
    pts.flags.writeable = False
    return GeometricGrid(float(eps), pts)


def size_bound(eps: float) -> float:
    return 4.0 / eps * math.log(1.0 / eps)


def uniform_points(K: int) -> np.ndarray:
    """K equally spaced points covering [0, 1], endpoints included."""
    return np.array([0.5]) if K == 1 else np.linspace(0.0, 1.0, K)


def fine_grid(n: int = FINE_POINTS) -> np.ndarray:
    return np.linspace(0.0, 1.0, n)


def grid_min_gap(f, grid, fine: np.ndarray | None = None) -> float:
    """min of ``f`` over ``grid`` minus its min over [0, 1].

    A :class:`PiecewiseLinear` is minimised exactly at its knots; anything
    else is minimised over the fine reference grid.
    """
    pts = grid.points if hasattr(grid, "points") else np.asarray(grid)
    if isinstance(f, PiecewiseLinear) and fine is None:
        ref_min = f.min_value
    else:
        ref = fine_grid() if fine is None else fine
        ref_min = float(np.min(f(ref)))
    return float(np.min(f(pts))) - ref_min


# --------------------------------------------------------------------------
# adversaries
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Adversary:
    """Oblivious loss sequence: ``functions[schedule[t]]`` on round t."""

    name: str
    functions: tuple
    schedule: np.ndarray

    @property
    def T(self) -> int:
        return self.schedule.size

    def table(self, points) -> np.ndarray:
        return np.stack([np.clip(f(points), 0.0, 1.0) for f in self.functions])

    def counts(self) -> np.ndarray:
        return np.bincount(self.schedule, minlength=len(self.functions))

    def best_fixed(self, fine: np.ndarray | None = None) -> float:
        """min over the reference grid of the cumulative loss."""
        ref = fine_grid() if fine is None else fine
        return float(np.min(self.counts() @ self.table(ref)))


def make_adversary(name: str, T: int, rng: np.random.Generator) -> Adversary:
    if name == "constant":
        fns = (chord_linear(0.5, 0.5),)
        sched = np.zeros(T, dtype=int)
    elif name == "static-valley":
        fns = (make_convex(rng, "random-slopes"),)
        sched = np.zeros(T, dtype=int)
    elif name == "needle":
        width = rng.uniform(2e-3, 1e-2)
        side = "left" if rng.uniform() < 0.5 else "right"
        fns = (needle_valley(rng.uniform(0.5, 0.9), width, rng.uniform(0.2, 0.8) * width, side,
                             rise=rng.uniform(0.3, 1.0)),)
        sched = np.zeros(T, dtype=int)
    elif name == "drifting-vee":
        kinks = np.sort(rng.uniform(size=4))
        fns = tuple(vee(k, 0.8, 0.1) for k in kinks)
        sched = (np.arange(T) * len(fns) // T).astype(int)
    elif name == "chord":
        fns = (make_convex(rng, "chord-linear"),)
        sched = np.zeros(T, dtype=int)
    else:
        raise ValueError(f"unknown adversary {name!r}; choose from {ADVERSARIES}")
    return Adversary(name, fns, sched)


# --------------------------------------------------------------------------
# Exp3
# --------------------------------------------------------------------------


def exp3_params(K: int, T: int) -> tuple[float, float]:
    """gamma = min(1, sqrt(K log K / ((e - 1) T))), eta = gamma / K."""
    if K <= 1:
        return 0.0, 0.0
    gamma = min(1.0, math.sqrt(K * math.log(K) / ((math.e - 1.0) * T)))
    return gamma, gamma / K


@dataclass(frozen=True, eq=False)
class Exp3State:
    """Log-weights are kept instead of weights to survive long horizons."""

    log_weights: np.ndarray
    gamma: float
    eta: float
    cum_estimates: np.ndarray

    @classmethod
    def start(cls, K: int, gamma: float, eta: float) -> "Exp3State":
        return cls(np.zeros(K), gamma, eta, np.zeros(K))

    @property
    def K(self) -> int:
        return self.log_weights.size

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights - self.log_weights.max())

    def probs(self) -> np.ndarray:
        w = self.weights
        return (1.0 - self.gamma) * w / w.sum() + self.gamma / self.K


def exp3_step(state: Exp3State, observed_loss: float, chosen_arm: int) -> Exp3State:
    if not 0.0 <= observed_loss <= 1.0:
        raise ValueError("observed loss must lie in [0, 1]")
    p = state.probs()[chosen_arm]
    if p <= 0:
        raise RuntimeError("chosen arm has zero sampling probability")
    est = observed_loss / p
    lw = state.log_weights.copy()
    lw[chosen_arm] -= state.eta * est
    lw -= lw.max()
    cum = state.cum_estimates.copy()
    cum[chosen_arm] += est
    return replace(state, log_weights=lw, cum_estimates=cum)


def run_exp3(tables: np.ndarray, schedules: np.ndarray, uniforms: np.ndarray,
             gamma: float, eta: float) -> np.ndarray:
    """Vectorised Exp3 over R independent replicas.

    ``tables`` is (R, n_functions, K): each replica's losses at the arms.
    ``schedules`` is (R, T) function indices and ``uniforms`` is (R, T) with
    one draw per replica per round.  Returns (R,) cumulative losses.
    """
    R, T = uniforms.shape
    K = tables.shape[2]
    lw = np.zeros((R, K))
    total = np.zeros(R)
    rows = np.arange(R)
    # per-round losses of every arm, gathered lazily by schedule
    static = bool(np.all(schedules == schedules[:, :1]))
    fixed = tables[rows, schedules[:, 0]] if static else None
    for t in range(T):
        w = np.exp(lw - lw.max(axis=1, keepdims=True))
        p = (1.0 - gamma) * w / w.sum(axis=1, keepdims=True) + gamma / K
        c = np.cumsum(p, axis=1)
        arm = (c < (uniforms[:, t] * c[:, -1])[:, None]).sum(axis=1)
        np.minimum(arm, K - 1, out=arm)
        if static:
            loss = fixed[rows, arm]
        else:
            loss = tables[rows, schedules[:, t], arm]
        total += loss
        lw[rows, arm] -= eta * loss / p[rows, arm]
    return total


@dataclass
class Exp3Report:
    adversary: str
    grid_kind: str
    T: int
    eps: float
    K: int
    regrets: np.ndarray
    t23_reference: float

    @property
    def mean(self) -> float:
        return float(np.mean(self.regrets))

    @property
    def stderr(self) -> float:
        r = self.regrets
        return float(np.std(r, ddof=1) / math.sqrt(r.size)) if r.size > 1 else 0.0


def arm_points(grid_kind: str, eps: float) -> np.ndarray:
    geo = build_geometric_grid(eps).points
    if grid_kind == "geometric":
        return geo
    if grid_kind == "uniform":
        return uniform_points(geo.size)
    raise ValueError("grid kind must be 'geometric' or 'uniform'")


def run_exp3_episodes(adversaries, T: int, grid_kind: str, eps: float | None,
                      uniforms: np.ndarray, fine: np.ndarray | None = None) -> Exp3Report:
    """One replica per adversary; row r of ``uniforms`` drives replica r."""
    if eps is None:
        eps = T ** (-1.0 / 3.0)
    if any(adv.T != T for adv in adversaries):
        raise ValueError("adversary horizon differs from T")
    if len({len(adv.functions) for adv in adversaries}) > 1:
        raise ValueError("adversaries in one batch must share their function count")
    pts = arm_points(grid_kind, eps)
    K = pts.size
    gamma, eta = exp3_params(K, T)
    tables = np.stack([adv.table(pts) for adv in adversaries])
    schedules = np.stack([adv.schedule for adv in adversaries])
    total = run_exp3(tables, schedules, np.atleast_2d(uniforms), gamma, eta)
    best = np.array([adv.best_fixed(fine) for adv in adversaries])
    name = adversaries[0].name if adversaries else ""
    return Exp3Report(name, grid_kind, T, eps, K, total - best, T ** (2.0 / 3.0))


def run_exp3_episode(adversary: Adversary, T: int, grid_kind: str, seed: int,
                     eps: float | None = None) -> Exp3Report:
    rng = np.random.default_rng(seed)
    return run_exp3_episodes([adversary], T, grid_kind, eps, rng.uniform(size=(1, T)))
