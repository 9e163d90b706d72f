"""The acceptance suite: nine numbered checks, each returning a pass/fail line.

Criteria 1 to 3 share one batch of Bayesian runs.  ``scale="quick"`` shrinks
every sweep for smoke testing; the acceptance gate always uses ``"full"``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import exp3_grid as e3
from . import fullinfo_simplex as fi
from . import info_metrics as im
from . import oracle
from .convexfn import FAMILIES, Grid, make_convex
from .harness import ExperimentConfig, rng_for, run_bayes, run_exp3
from .lemma_lab import check_discretization, net_delta, search_violations, uniform_net
from .prior import PRIOR_NAMES, FinitePrior, Posterior, round_stats

SCALES = {
    "full": dict(bayes_T=(100, 400, 900), bayes_M=200, bayes_reps=200, l2g_trials=100_000,
                 sweep_funcs=10_000, exp3_T=(1_000, 10_000, 100_000), exp3_seeds=50,
                 oracle_instances=100, discret_funcs=10_000),
    "quick": dict(bayes_T=(25, 64), bayes_M=20, bayes_reps=4, l2g_trials=5_000,
                  sweep_funcs=200, exp3_T=(200, 800, 3_200), exp3_seeds=8,
                  oracle_instances=20, discret_funcs=200),
}

SIZE_EPS = np.geomspace(1e-3, 0.5, 50)
GAP_EPS = (0.2, 0.1, 0.05, 0.02, 0.01)
DISCRET_EPS = (0.2, 0.1, 0.05)
SLOPE_RANGE = (0.55, 0.78)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    runtime: float = 0.0
    data: dict = field(default_factory=dict, repr=False)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number}: {self.name} -- {self.detail} ({self.runtime:.1f}s)"


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.runtime = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# --------------------------------------------------------------------------
# 1-3: Bayesian algorithm
# --------------------------------------------------------------------------


def bayes_runs(seed: int = 0, scale: str = "full") -> dict:
    """{(T, prior): (RegretReport, runtime)} with traces discarded."""
    p = SCALES[scale]
    runs = {}
    for T in p["bayes_T"]:
        for name in PRIOR_NAMES:
            cfg = ExperimentConfig("bayes", name, T, "auto", p["bayes_reps"], seed, M=p["bayes_M"])
            report, _, _ = run_bayes(cfg, keep_traces=False)
            runs[(T, name)] = report
    return runs


def criterion_1(runs: dict) -> CriterionResult:
    t0 = time.perf_counter()
    worst, parts, ok = 0.0, [], True
    for (T, name), rep in runs.items():
        ratio = rep.mean / rep.bound
        worst = max(worst, ratio)
        ok &= rep.mean <= rep.bound
        parts.append(f"{name}@{T}: {rep.mean:.2f}±{rep.stderr:.2f}")
    detail = f"max mean/bound = {worst:.4f} over {len(runs)} runs; " + ", ".join(parts)
    runtime = sum(rep.runtime for rep in runs.values())
    return CriterionResult(1, "Bayesian regret below the algorithm bound", bool(ok), detail,
                           runtime + time.perf_counter() - t0)


def criterion_2(runs: dict) -> CriterionResult:
    keys = ("rt", "vt", "final", "l2", "logsum", "pi", "exact")
    fails = {k: sum(rep.invariant_failures[k] for rep in runs.values()) for k in keys}
    rounds = sum(rep.rounds_checked for rep in runs.values())
    ok = not any(fails.values())
    detail = f"{rounds} rounds checked; failures " + ", ".join(f"{k}={v}" for k, v in fails.items())
    return CriterionResult(2, "per-round lemma suite", ok, detail)


def criterion_3(runs: dict) -> CriterionResult:
    pinsker = sum(rep.invariant_failures["pinsker"] for rep in runs.values())
    worst, ok = 0.0, pinsker == 0
    for (T, name), rep in runs.items():
        s = float(np.mean(rep.extra["sum_sqrt_v"]))
        bound = 1.05 * im.russo_bound(T, rep.extra["K"])
        worst = max(worst, s / bound)
        ok &= s <= bound
    reps = min(rep.regrets.size for rep in runs.values())
    detail = (f"pinsker failures = {pinsker}; max mean sum sqrt(E v) / (1.05 sqrt(T log K / 2)) "
              f"= {worst:.4f} ({reps} replicas per run)")
    return CriterionResult(3, "Pinsker relation and cumulative information bound", bool(ok), detail)


# --------------------------------------------------------------------------
# 4: local-to-global
# --------------------------------------------------------------------------


@_timed
def criterion_4(seed: int = 0, scale: str = "full") -> CriterionResult:
    trials = SCALES[scale]["l2g_trials"]
    res = search_violations(rng_for(seed, 0, "l2g"), Grid.uniform(50), trials, strict=False)
    worst = ", ".join(f"{m:.3g}" for m in res.margins)
    ok = res.violations == 0 and res.trials >= trials
    detail = (f"{res.trials} instances, {res.violations} margins < -1e-12; worst 10: [{worst}]; "
              f"min lhs/rhs where rhs > 0: {res.min_ratio:.6f}")
    return CriterionResult(4, "local-to-global violation search", ok, detail,
                           data={"margins": res.margins, "worst": res.worst})


# --------------------------------------------------------------------------
# 5: geometric grid
# --------------------------------------------------------------------------


@_timed
def criterion_5(seed: int = 0, scale: str = "full") -> CriterionResult:
    sizes = np.array([len(e3.build_geometric_grid(eps)) for eps in SIZE_EPS])
    bounds = np.array([e3.size_bound(eps) for eps in SIZE_EPS])
    size_ok = bool(np.all(sizes <= bounds))
    grids = {eps: e3.build_geometric_grid(eps).points for eps in GAP_EPS}
    n = SCALES[scale]["sweep_funcs"]
    worst = {eps: -math.inf for eps in GAP_EPS}
    for fam in FAMILIES:
        rng = rng_for(seed, 0, f"sebgrid:{fam}")
        for _ in range(n):
            f = make_convex(rng, fam)
            for eps, pts in grids.items():
                worst[eps] = max(worst[eps], e3.grid_min_gap(f, pts))
    gap_ok = all(worst[eps] <= 2 * eps for eps in GAP_EPS)
    ratio = max(worst[eps] / (2 * eps) for eps in GAP_EPS)
    detail = (f"size/bound max {np.max(sizes / bounds):.3f} over {SIZE_EPS.size} eps in "
              f"[{SIZE_EPS[0]:g}, {SIZE_EPS[-1]:g}]; max gap/(2 eps) {ratio:.3f} over "
              f"{n} functions x {len(FAMILIES)} families x {len(GAP_EPS)} eps")
    return CriterionResult(5, "geometric grid size and min-gap", size_ok and gap_ok, detail,
                           data={"sizes": sizes, "bounds": bounds, "gaps": worst})


# --------------------------------------------------------------------------
# 6: Exp3 scaling
# --------------------------------------------------------------------------


def fit_slope(Ts, regrets) -> float:
    return float(np.polyfit(np.log(Ts), np.log(regrets), 1)[0])


@_timed
def criterion_6(seed: int = 0, scale: str = "full") -> CriterionResult:
    p = SCALES[scale]
    Ts, seeds = p["exp3_T"], p["exp3_seeds"]
    means = []
    for T in Ts:
        rep, _ = run_exp3(ExperimentConfig("exp3", "static-valley", T, "auto", seeds, seed))
        means.append(rep.mean)
    slope = fit_slope(Ts, means)
    T_mid = Ts[len(Ts) // 2]
    geo, _ = run_exp3(ExperimentConfig("exp3", "needle", T_mid, "auto", seeds, seed, grid="geometric"))
    uni, _ = run_exp3(ExperimentConfig("exp3", "needle", T_mid, "auto", seeds, seed, grid="uniform"))
    slope_ok = SLOPE_RANGE[0] <= slope <= SLOPE_RANGE[1]
    needle_ok = geo.mean <= uni.mean
    detail = (f"slope {slope:.3f} (means " + ", ".join(f"{m:.1f}" for m in means) +
              f"); needle@{T_mid}: geometric {geo.mean:.1f}±{geo.stderr:.1f} vs "
              f"uniform {uni.mean:.1f}±{uni.stderr:.1f}")
    return CriterionResult(6, "Exp3 scaling and grid comparison", slope_ok and needle_ok, detail,
                           data={"slope": slope, "means": means, "needle": (geo.mean, uni.mean)})


# --------------------------------------------------------------------------
# 7: full information
# --------------------------------------------------------------------------


def fullinfo_priors(seed: int = 0):
    for n in (2, 3, 4, 5):
        for T in (1, 2, 5, 10, 20):
            for M in (1, 10, 100):
                for rep in range(2):
                    rng = rng_for(seed, rep, f"simplex:{n}:{T}:{M}")
                    yield fi.random_simplex_prior(rng, n, T, M)


@_timed
def criterion_7(seed: int = 0, scale: str = "full") -> CriterionResult:
    counts = dict(priors=0, martingale=0, tv=0, neyman=0, regret=0)
    worst_tv = 0.0
    for prior in fullinfo_priors(seed):
        rep = fi.analyse(prior)
        counts["priors"] += 1
        counts["martingale"] += int(not rep.martingale_ok or rep.simplex_gap > 1e-9)
        counts["tv"] += int(np.sum(~rep.tv_holds()))
        counts["neyman"] += int(rep.total_variation > rep.neyman_bound)
        counts["regret"] += int(rep.regret > rep.neyman_bound)
        worst_tv = max(worst_tv, rep.total_variation / rep.neyman_bound)
    ok = counts["martingale"] == counts["tv"] == counts["neyman"] == counts["regret"] == 0
    detail = (f"{counts['priors']} priors (n 2..5, T <= 20, M <= 100); failures: martingale "
              f"{counts['martingale']}, tv rounds {counts['tv']}, total variation {counts['neyman']}, "
              f"regret {counts['regret']}; max TV / sqrt(T log n / 2) = {worst_tv:.3f}")
    return CriterionResult(7, "full-information exact checks", ok, detail, data=counts)


# --------------------------------------------------------------------------
# 8: oracle equivalence
# --------------------------------------------------------------------------


@_timed
def criterion_8(seed: int = 0, scale: str = "full") -> CriterionResult:
    worst = 0.0
    rounds = 0
    n = SCALES[scale]["oracle_instances"]
    for k in range(n):
        rng = rng_for(seed, k, "oracle")
        M, K, T = int(rng.integers(1, 21)), int(rng.integers(2, 11)), int(rng.integers(1, 6))
        cube = rng.integers(0, 9, size=(M, T, K)) / 8.0
        w = rng.dirichlet(np.ones(M))
        prior = FinitePrior.from_cube(Grid.uniform(K), cube, w)
        post = Posterior.initial(prior)
        truth = int(rng.integers(M))
        history = []
        for t in range(1, T + 1):
            st = round_stats(post, t)
            ref = oracle.quantities(cube, w, history)
            mine = {
                "alpha": st.alpha, "f": st.mean,
                "cond": np.array([st.cond_row(j) for j in range(K)]),
                "r": im.regret_from_stats(st), "v": im.variance_from_stats(st),
                "I": im.mutual_info_from_stats(st),
            }
            for key, val in mine.items():
                worst = max(worst, float(np.max(np.abs(np.asarray(ref[key]) - val))))
            arm = int(rng.integers(K))
            loss = float(cube[truth, t - 1, arm])
            history.append((arm, loss))
            post = post.update(t, arm, loss)
            rounds += 1
    ok = worst <= 1e-9
    return CriterionResult(8, "oracle equivalence", ok,
                           f"{n} instances, {rounds} rounds, max abs difference {worst:.3g}")


# --------------------------------------------------------------------------
# 9: discretization
# --------------------------------------------------------------------------


@_timed
def criterion_9(seed: int = 0, scale: str = "full") -> CriterionResult:
    n = SCALES[scale]["discret_funcs"]
    per_family = n // len(FAMILIES)
    failures = 0
    worst = -math.inf
    for eps in DISCRET_EPS:
        net = uniform_net(net_delta(eps))
        for fam in FAMILIES:
            rng = rng_for(seed, 0, f"discret:{eps}:{fam}")
            for _ in range(per_family):
                f = make_convex(rng, fam)
                gap = float(np.min(f(net.points))) - f.min_value
                worst = max(worst, gap / eps)
                failures += int(not check_discretization(f, net, eps))
    detail = (f"{per_family * len(FAMILIES)} functions at each eps in {DISCRET_EPS}; "
              f"{failures} failures; max gap/eps {worst:.3g}")
    return CriterionResult(9, "delta-net discretization", failures == 0, detail)


def run_all(seed: int = 0, scale: str = "full", log=print) -> list:
    results = []
    runs = bayes_runs(seed, scale)
    for fn in (criterion_1, criterion_2, criterion_3):
        results.append(fn(runs))
        log(results[-1].line())
    for fn in (criterion_4, criterion_5, criterion_6, criterion_7, criterion_8, criterion_9):
        results.append(fn(seed, scale))
        log(results[-1].line())
    return results
