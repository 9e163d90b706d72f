"""Convex functions on finite grids of [0, 1].

Functions are stored as their values at grid points.  A discrete-convex
value sequence is the trace of its own piecewise-linear interpolant, which
is a genuine convex function on [min grid, max grid]; every lemma check in
this package relies on that correspondence.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TOL_CONVEX = 1e-9
TOL_SUM = 1e-9


class GridMismatch(ValueError):
    pass


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Grid:
    """Strictly increasing points in [0, 1]."""

    points: np.ndarray

    def __post_init__(self):
        pts = _frozen(self.points)
        if pts.ndim != 1 or pts.size == 0:
            raise ValueError("grid needs at least one point")
        if pts[0] < 0.0 or pts[-1] > 1.0:
            raise ValueError("grid points must lie in [0, 1]")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("grid points must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, K: int) -> "Grid":
        """The K-point grid {i/K : i = 1..K} (zero excluded)."""
        if K < 1:
            raise ValueError("K must be >= 1")
        return cls(np.arange(1, K + 1, dtype=float) / K)

    def __len__(self) -> int:
        return self.points.size

    def same_as(self, other: "Grid") -> bool:
        return self is other or np.array_equal(self.points, other.points)

    def __eq__(self, other):
        return isinstance(other, Grid) and self.same_as(other)

    def __hash__(self):
        return hash(self.points.tobytes())


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != (len(self.grid),):
            raise ValueError(
                f"expected {len(self.grid)} values, got shape {vals.shape}"
            )
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.size

    def __call__(self, x):
        """Evaluate the piecewise-linear interpolant (constant outside the grid)."""
        return np.interp(x, self.grid.points, self.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        _check_same_grid(self.grid, other.grid)
        return GridFunction(self.grid, self.values - other.values)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    grid: Grid
    masses: np.ndarray

    def __post_init__(self):
        m = _frozen(self.masses)
        if m.shape != (len(self.grid),):
            raise ValueError("masses must match the grid size")
        if np.any(m < 0):
            raise ValueError("masses must be nonnegative")
        if abs(m.sum() - 1.0) > TOL_SUM:
            raise ValueError(f"masses sum to {m.sum()!r}, not 1")
        object.__setattr__(self, "masses", m)

    @classmethod
    def uniform(cls, grid: Grid) -> "DiscreteMeasure":
        return cls(grid, np.full(len(grid), 1.0 / len(grid)))

    @classmethod
    def point_mass(cls, grid: Grid, index: int) -> "DiscreteMeasure":
        m = np.zeros(len(grid))
        m[index] = 1.0
        return cls(grid, m)


def _check_same_grid(*grids: Grid) -> None:
    first = grids[0]
    for g in grids[1:]:
        if not first.same_as(g):
            raise GridMismatch("grid mismatch")


def convex_slack(values, points) -> np.ndarray:
    """Slope increments between consecutive grid cells.

    Works row-wise on 2-D input.  Discrete convexity is ``slack >= -tol``.
    """
    values = np.asarray(values, dtype=float)
    points = np.asarray(points, dtype=float)
    slopes = np.diff(values, axis=-1) / np.diff(points)
    return np.diff(slopes, axis=-1)


def is_discrete_convex(values, points, tol: float = TOL_CONVEX):
    slack = convex_slack(values, points)
    if slack.shape[-1] == 0:
        return True if np.ndim(values) == 1 else np.ones(np.shape(values)[0], bool)
    return np.all(slack >= -tol, axis=-1)


def validate_convex(f: GridFunction, tol: float = TOL_CONVEX) -> bool:
    return bool(is_discrete_convex(f.values, f.grid.points, tol))


def argmin_grid(f) -> int:
    """Index of the minimum value; ties go to the smallest index."""
    values = f.values if isinstance(f, GridFunction) else np.asarray(f)
    return int(np.argmin(values))


def weighted_l2(f: GridFunction, g: GridFunction, nu: DiscreteMeasure) -> float:
    _check_same_grid(f.grid, g.grid, nu.grid)
    d = f.values - g.values
    return math.sqrt(float(np.dot(nu.masses, d * d)))


def regularize(f: GridFunction, eps: float, x_star_index: int) -> GridFunction:
    """Return ``f(x) + eps * |x - x*|``, which has a strict minimum at x*."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    pts = f.grid.points
    x_star = pts[x_star_index]
    return GridFunction(f.grid, f.values + eps * np.abs(pts - x_star))


# --------------------------------------------------------------------------
# continuous piecewise-linear convex functions and generator families
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PiecewiseLinear:
    """Continuous piecewise-linear function on [0, 1] given by its knots.

    The knots always include 0 and 1, so the minimum over [0, 1] is exactly
    the minimum knot value.
    """

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = _frozen(self.xs)
        ys = _frozen(self.ys)
        if xs.shape != ys.shape or xs.size < 2:
            raise ValueError("need matching knot arrays with >= 2 knots")
        if xs[0] != 0.0 or xs[-1] != 1.0 or np.any(np.diff(xs) <= 0):
            raise ValueError("knots must increase strictly from 0 to 1")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    def __call__(self, x):
        return np.interp(x, self.xs, self.ys)

    @property
    def min_value(self) -> float:
        return float(self.ys.min())

    def is_convex(self, tol: float = TOL_CONVEX) -> bool:
        return bool(is_discrete_convex(self.ys, self.xs, tol))

    def on(self, grid: Grid) -> GridFunction:
        return GridFunction(grid, np.clip(self(grid.points), 0.0, 1.0))


def _knots(xs, ys) -> PiecewiseLinear:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    order = np.argsort(xs, kind="stable")
    xs, ys = xs[order], ys[order]
    keep = np.concatenate(([True], np.diff(xs) > 1e-15))
    return PiecewiseLinear(xs[keep], np.clip(ys[keep], 0.0, 1.0))


def random_slopes(rng: np.random.Generator, pieces: int | None = None) -> PiecewiseLinear:
    """Sum of sorted random slopes, affinely squeezed into [0, 1]."""
    if pieces is None:
        pieces = int(rng.integers(1, 9))
    inner = np.sort(rng.uniform(0.0, 1.0, size=pieces - 1))
    xs = np.concatenate(([0.0], inner, [1.0]))
    slopes = np.sort(rng.normal(size=pieces))
    ys = np.concatenate(([0.0], np.cumsum(slopes * np.diff(xs))))
    ys -= ys.min()
    span = ys.max()
    height = rng.uniform(0.05, 1.0)
    floor = rng.uniform(0.0, 1.0 - height)
    if span > 0:
        ys = floor + height * ys / span
    else:
        ys = ys + floor
    return _knots(xs, ys)


def vee(kink: float, height: float = 1.0, floor: float = 0.0) -> PiecewiseLinear:
    """``floor + height * |x - kink| / max(kink, 1 - kink)``."""
    if not 0.0 <= kink <= 1.0:
        raise ValueError("kink must lie in [0, 1]")
    if height < 0 or floor < 0 or floor + height > 1.0 + 1e-12:
        raise ValueError("vee must map into [0, 1]")
    scale = height / max(kink, 1.0 - kink)
    xs = [0.0, kink, 1.0]
    ys = [floor + scale * kink, floor, floor + scale * (1.0 - kink)]
    return _knots(xs, ys)


def needle_valley(
    depth: float, width: float, center: float | None = None, side: str = "left",
    rise: float = 1.0,
) -> PiecewiseLinear:
    """Steep convex valley of the given depth near one end of [0, 1].

    The steep wall has slope ``depth / width``; the valley floor sits at
    ``center`` (default ``width / 2``) measured from the chosen end, and the
    far wall climbs with ``rise * depth / (1 - center)``.
    """
    if not (0 < depth <= 1 and 0 < width <= 1):
        raise ValueError("need 0 < depth <= 1 and 0 < width <= 1")
    c = width / 2 if center is None else center
    if not 0 <= c <= width:
        raise ValueError("center must lie within width of the boundary")
    base = 1.0 - depth
    xs = [0.0, c, 1.0]
    far = base + rise * depth if c < 1 else base
    ys = [base + depth * c / width, base, far]
    if side == "right":
        xs = [0.0, 1.0 - c, 1.0]
        ys = [far, base, base + depth * c / width]
    elif side != "left":
        raise ValueError(f"side must be 'left' or 'right', not {side!r}")
    return _knots(xs, ys)


def chord_linear(y0: float, y1: float) -> PiecewiseLinear:
    return _knots([0.0, 1.0], [y0, y1])


FAMILIES = ("random-slopes", "vee", "needle-valley", "chord-linear")

_FAMILY_RE = re.compile(r"^\s*([a-z\-]+)\s*(?:\((.*)\))?\s*$")


def parse_family(family: str) -> tuple[str, list[float]]:
    """Split ``"vee(0.5)"`` into ``("vee", [0.5])``."""
    m = _FAMILY_RE.match(family)
    if not m or m.group(1) not in FAMILIES:
        raise ValueError(f"unknown convex family {family!r}")
    args = m.group(2)
    nums = [float(a) for a in args.split(",")] if args and args.strip() else []
    return m.group(1), nums


def make_convex(rng: np.random.Generator, family: str) -> PiecewiseLinear:
    """Draw a convex function of ``family``; positional args fix parameters.

    ``vee(kink)``, ``needle-valley(depth, width)``, ``random-slopes(pieces)``,
    ``chord-linear(y0, y1)``.  Unfixed parameters are drawn from ``rng``.
    """
    name, args = parse_family(family)
    if name == "random-slopes":
        return random_slopes(rng, int(args[0]) if args else None)
    if name == "vee":
        kink = args[0] if args else rng.uniform()
        return vee(kink)
    if name == "needle-valley":
        depth = args[0] if args else rng.uniform(0.3, 1.0)
        width = args[1] if len(args) > 1 else math.exp(rng.uniform(math.log(1e-4), math.log(0.1)))
        center = rng.uniform(0.0, width)
        side = "left" if rng.uniform() < 0.5 else "right"
        return needle_valley(depth, width, center, side, rise=rng.uniform(0.0, 1.0))
    y0, y1 = (args[0], args[1]) if len(args) == 2 else rng.uniform(size=2)
    return chord_linear(y0, y1)


def sample_convex(rng: np.random.Generator, grid: Grid, family: str) -> GridFunction:
    """Draw a convex function from ``family`` and evaluate it on ``grid``."""
    return make_convex(rng, family).on(grid)


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------


def write_function_csv(f: GridFunction, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "value"])
        for x, v in zip(f.grid.points, f.values):
            w.writerow([repr(float(x)), repr(float(v))])


def read_function_csv(path) -> GridFunction:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    xs = [float(r["x"]) for r in rows]
    vs = [float(r["value"]) for r in rows]
    return GridFunction(Grid(xs), vs)


def write_sequence_csv(losses, path) -> None:
    """Write a list of GridFunctions as ``t,x,value`` rows (t from 1)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "value"])
        for t, f in enumerate(losses, start=1):
            for x, v in zip(f.grid.points, f.values):
                w.writerow([t, repr(float(x)), repr(float(v))])


def read_sequence_csv(path, grid: Grid | None = None) -> list[GridFunction]:
    path = Path(path)
    rows: dict[int, list[tuple[float, float]]] = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            rows.setdefault(int(r["t"]), []).append((float(r["x"]), float(r["value"])))
    if not rows:
        raise ValueError(f"{path}: empty loss sequence")
    out = []
    for t in sorted(rows):
        pairs = sorted(rows[t])
        xs = np.array([p[0] for p in pairs])
        if grid is None:
            grid = Grid(xs)
        elif not np.array_equal(grid.points, xs):
            raise GridMismatch(f"{path}: grid mismatch at t={t}")
        out.append(GridFunction(grid, [p[1] for p in pairs]))
    return out
