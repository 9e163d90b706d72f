"""Modified Thompson Sampling on the uniform grid {i/K}.

Each round the player computes the posterior law ``alpha`` of the hindsight
optimum, the posterior mean loss ``f`` and the conditional means
``f_i(x_i)``, keeps the candidate arms that are both plausible
(``alpha_i >= eps/K``) and promising (``f_i(x_i) <= min f``), plays each
candidate with half its posterior mass and puts the rest on the greedy arm.

Draw order of the per-episode generator: one uniform to pick the scenario,
then one uniform per round to sample the arm from ``pi`` by inverse CDF.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import info_metrics as im
from .convexfn import Grid, GridFunction, TOL_SUM
from .lemma_lab import LEMMA_TOL, build_weights, check_l2bound, check_log_sum
from .prior import FinitePrior, Posterior, round_stats

FLAG_NAMES = ("rt", "vt", "final", "l2", "logsum", "pi", "pinsker", "exact")


def arms_for(eps: float) -> int:
    """K = ceil(1/eps^2), ignoring float fuzz so eps = 1/sqrt(T) gives K = T."""
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    raw = 1.0 / (eps * eps)
    near = round(raw)
    if abs(raw - near) <= 1e-9 * max(1.0, raw):
        return int(near)
    return int(math.ceil(raw))


def theorem_bound(T: int, K: int, eps: float) -> float:
    L = math.log(2 * K / eps)
    return 10 * math.sqrt(T) * L + 10 * eps * T * math.sqrt(L)


@dataclass(frozen=True)
class AlgoConfig:
    eps: float
    T: int
    seed: int = 0

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        arms_for(self.eps)

    @property
    def K(self) -> int:
        return arms_for(self.eps)

    @classmethod
    def auto(cls, T: int, seed: int = 0) -> "AlgoConfig":
        return cls(1.0 / math.sqrt(T), T, seed)


@dataclass
class RoundTrace:
    t: int
    i_star: int
    S: np.ndarray
    support: np.ndarray      # arms with pi > 0
    pi_support: np.ndarray
    X_t: int
    loss: float
    E_r: float
    E_v: float
    E_I: float
    H: float
    alpha_S: float
    sum_alpha_over_w: float
    w: np.ndarray            # aligned with S
    flags: dict = field(default_factory=dict)

    @property
    def pi_istar(self) -> float:
        return float(self.pi_support[np.searchsorted(self.support, self.i_star)])

    @property
    def ok(self) -> bool:
        return all(self.flags.values())

    def flag_string(self) -> str:
        return "".join("1" if self.flags.get(k, True) else "0" for k in FLAG_NAMES)


@dataclass
class EpisodeResult:
    scenario: int
    regret: float
    bound: float
    sum_sqrt_v: float
    failures: dict

    @property
    def passed(self) -> bool:
        return not any(self.failures.values())


def exploit_index(f_t) -> int:
    values = f_t.values if isinstance(f_t, GridFunction) else np.asarray(f_t)
    return int(np.argmin(values))


def candidate_set(alpha, f_t, cond_diag, eps: float) -> np.ndarray:
    """Arms with f_i(x_i) <= f_t(x*_t) and alpha_i >= eps/K (exact comparisons)."""
    a = alpha.masses if hasattr(alpha, "masses") else np.asarray(alpha, dtype=float)
    f = f_t.values if isinstance(f_t, GridFunction) else np.asarray(f_t, dtype=float)
    diag = np.asarray(cond_diag, dtype=float)
    K = a.size
    best = f[exploit_index(f)]
    return np.flatnonzero((diag <= best) & (a >= eps / K))


def sampling_dist(alpha, S, i_star: int) -> np.ndarray:
    a = alpha.masses if hasattr(alpha, "masses") else np.asarray(alpha, dtype=float)
    S = np.asarray(S, dtype=int)
    pi = np.zeros(a.size)
    pi[S] = 0.5 * a[S]
    pi[i_star] += 1.0 - 0.5 * a[S].sum()
    return pi


def _sample(pi_support: np.ndarray, u: float) -> int:
    c = np.cumsum(pi_support)
    k = int(np.searchsorted(c, u * c[-1], side="right"))
    return min(k, pi_support.size - 1)


def play_round(post: Posterior, t: int, eps: float, u: float, true_losses: np.ndarray,
               check: bool = True):
    """One round: returns (trace, next posterior)."""
    st = round_stats(post, t)
    K = st.mean.size
    i_star = exploit_index(st.mean)
    S = candidate_set(st.alpha, st.mean, st.diag, eps)
    pi = sampling_dist(st.alpha, S, i_star)
    support = np.flatnonzero(pi)
    arm = int(support[_sample(pi[support], u)])
    loss = float(true_losses[arm])

    snap = im.snapshot(st, pi)
    points = post.prior.grid.points
    ws = build_weights(st.mean, pi, S, i_star, eps, points)
    sum_aw = float(np.sum(st.alpha[S] / ws.w)) if S.size else 0.0
    flags = {}
    if check:
        flags = _lemma_flags(st, pi, S, i_star, eps, snap, ws, sum_aw, support)
    trace = RoundTrace(
        t, i_star, S, support, pi[support], arm, loss,
        snap.E_r, snap.E_v, snap.E_I, snap.H,
        float(st.alpha[S].sum()), sum_aw, ws.w, flags,
    )
    return trace, post.update(t, arm, loss)


def _lemma_flags(st, pi, S, i_star, eps, snap, ws, sum_aw, support) -> dict:
    K = st.mean.size
    f = st.mean
    tol = LEMMA_TOL
    # expected regret two ways: closed form vs (arm, scenario) enumeration
    closed = float(pi @ f - st.alpha @ st.diag)
    opt = st.losses[np.arange(st.p.size), st.xs]
    direct = float(st.p @ (st.losses[:, support] - opt[:, None]) @ pi[support])
    exact = abs(closed - direct) <= 1e-9 and abs(closed - snap.E_r) <= 1e-9

    rt_rhs = float(st.alpha[S] @ (f[S] - st.diag[S])) + eps
    rt = snap.E_r <= rt_rhs + tol

    vt_rhs = 0.0
    cond_S = np.array([st.cond_row(i) for i in S]).reshape(S.size, K)
    if S.size:
        d = f[support][None, :] - cond_S[:, support]
        vt_rhs = float(st.alpha[S] @ ((d * d) @ pi[support]))
    vt = snap.E_v >= vt_rhs - tol

    final_rhs = 2 * math.sqrt(sum_aw) * (math.sqrt(max(snap.E_v, 0.0)) + eps) + eps
    final = snap.E_r <= final_rhs + tol

    _, _, l2_ok = check_l2bound(f, cond_S, pi, ws, eps)
    _, _, log_ok = check_log_sum(st.alpha, ws, K, eps)
    return {
        "rt": bool(rt),
        "vt": bool(vt),
        "final": bool(final),
        "l2": bool(np.all(l2_ok)),
        "logsum": bool(log_ok),
        "pi": bool(pi[i_star] >= 0.5 and abs(pi.sum() - 1.0) <= TOL_SUM),
        "pinsker": im.check_pinsker(snap),
        "exact": bool(exact),
    }


def run_episode(prior: FinitePrior, cfg: AlgoConfig, rng: np.random.Generator | None = None,
                check: bool = True, scenario: int | None = None):
    """Run one episode against a scenario drawn from ``prior``.

    Returns (traces, EpisodeResult).  Regret is measured against the drawn
    scenario's grid optimum.
    """
    K = cfg.K
    if prior.K != K or not prior.grid.same_as(Grid.uniform(K)):
        raise ValueError(f"prior grid must be the uniform {K}-point grid i/K")
    if prior.horizon != cfg.T:
        raise ValueError(f"prior horizon {prior.horizon} differs from T = {cfg.T}")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    u0 = rng.uniform()
    if scenario is None:
        cw = np.cumsum(prior.weights)
        scenario = min(int(np.searchsorted(cw, u0 * cw[-1], side="right")), prior.size - 1)
    xstar = int(prior.xstar[scenario])

    post = Posterior.initial(prior)
    traces = []
    regret = 0.0
    for t in range(1, cfg.T + 1):
        row = prior.losses(t, rows=[scenario])[0]
        tr, post = play_round(post, t, cfg.eps, rng.uniform(), row, check)
        regret += tr.loss - float(row[xstar])
        traces.append(tr)
    failures = {k: sum(not tr.flags.get(k, True) for tr in traces) for k in FLAG_NAMES}
    result = EpisodeResult(
        scenario, regret, theorem_bound(cfg.T, K, cfg.eps),
        sum(math.sqrt(max(tr.E_v, 0.0)) for tr in traces), failures,
    )
    return traces, result
