"""Experiment orchestration: configs, seeded replicas, reports and CSV output.

Every random draw goes through :func:`rng_for`, keyed by (master seed,
replica index, stream label), so results do not depend on how replicas are
scheduled across worker processes.
"""

from __future__ import annotations

import csv
import hashlib
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import exp3_grid as e3
from . import fullinfo_simplex as fi
from .bandit_bayes import FLAG_NAMES, AlgoConfig, run_episode
from .convexfn import Grid
from .prior import PRIOR_NAMES, build_prior, load_prior

KINDS = ("bayes", "exp3", "fullinfo", "info")


def derive_seed(master: int, replica: int, label: str) -> int:
    """Stable 64-bit seed from (master, replica, label)."""
    h = hashlib.blake2b(f"{int(master)}:{int(replica)}:{label}".encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def rng_for(master: int, replica: int, label: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, replica, label))


def fmt(x) -> str:
    """17 significant digits for floats, so CSV values round-trip exactly."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path) -> tuple[list, list]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    kind: str = "bayes"
    source: str = "iid-vee"           # prior name/directory, or adversary name
    T: int = 100
    eps: str = "auto"
    replicas: int = 1
    seed: int = 0
    out: str = "out"
    M: int = 200
    n: int = 3
    grid: str = "geometric"
    mode: str = "exact"
    checks: bool = True
    threads: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.M < 1 or self.n < 2:
            raise ValueError("need M >= 1 and n >= 2")
        if self.kind in ("bayes", "info") and self.source not in PRIOR_NAMES \
                and not Path(self.source, "manifest.csv").is_file():
            raise ValueError(f"prior {self.source!r} is neither built-in nor a prior directory")
        if self.kind == "exp3" and self.source not in e3.ADVERSARIES:
            raise ValueError(f"unknown adversary {self.source!r}")
        self.eps_value()

    def eps_value(self) -> float:
        if str(self.eps) == "auto":
            if self.kind == "exp3":
                return self.T ** (-1.0 / 3.0)
            return 1.0 / math.sqrt(self.T)
        value = float(self.eps)
        if not 0 < value <= 1:
            raise ValueError("eps must lie in (0, 1]")
        return value


_BOOL = {"1": True, "true": True, "yes": True, "on": True,
         "0": False, "false": False, "no": False, "off": False}


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in types:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        kind = types[key]
        if kind == "int":
            out[key] = int(value)
        elif kind == "bool":
            if value.lower() not in _BOOL:
                raise ValueError(f"line {lineno}: {key} expects a boolean")
            out[key] = _BOOL[value.lower()]
        else:
            out[key] = value
    return out


def load_config(path, **overrides) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    values = parse_config_text(text)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def thread_count(flag: int | None = None) -> int:
    if flag is not None:
        return max(1, int(flag))
    return max(1, int(os.environ.get("BCO_LAB_THREADS", "1")))


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------


@dataclass
class RegretReport:
    kind: str
    regrets: np.ndarray
    bound: float
    invariant_failures: dict = field(default_factory=dict)
    rounds_checked: int = 0
    runtime: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return float(np.mean(self.regrets))

    @property
    def stderr(self) -> float:
        r = np.asarray(self.regrets, dtype=float)
        return float(np.std(r, ddof=1) / math.sqrt(r.size)) if r.size > 1 else 0.0

    @property
    def passed(self) -> bool:
        return not any(self.invariant_failures.values())


def replica_map(fn, items, threads: int = 1) -> list:
    """Apply ``fn`` to every item; results come back in input order."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def resolve_prior(cfg: ExperimentConfig):
    eps = cfg.eps_value()
    K = AlgoConfig(eps, cfg.T).K
    if cfg.source in PRIOR_NAMES:
        rng = rng_for(cfg.seed, 0, f"prior:{cfg.source}:{cfg.T}")
        return build_prior(cfg.source, Grid.uniform(K), cfg.T, cfg.M, rng)
    try:
        return load_prior(cfg.source)
    except OSError as exc:
        raise OSError(f"cannot load prior from {cfg.source}: {exc}") from exc


def _bayes_replica(args):
    prior, algo, seed, r, checks, keep = args
    traces, res = run_episode(prior, algo, rng_for(seed, r, "episode"), check=checks)
    return (traces if keep else None), res


def run_bayes(cfg: ExperimentConfig, prior=None, keep_traces: bool = True):
    """Returns (report, per-replica traces, per-replica EpisodeResult).

    With ``keep_traces=False`` the traces list holds ``None`` per replica.
    """
    t0 = time.perf_counter()
    prior = resolve_prior(cfg) if prior is None else prior
    # a prior file fixes its own grid and horizon
    eps = 1.0 / math.sqrt(prior.K) if str(cfg.eps) == "auto" else cfg.eps_value()
    algo = AlgoConfig(eps, prior.horizon, cfg.seed)
    jobs = [(prior, algo, cfg.seed, r, cfg.checks, keep_traces) for r in range(cfg.replicas)]
    out = replica_map(_bayes_replica, jobs, cfg.threads)
    traces = [o[0] for o in out]
    results = [o[1] for o in out]
    failures = {k: sum(res.failures[k] for res in results) for k in FLAG_NAMES}
    report = RegretReport(
        "bayes", np.array([res.regret for res in results]), results[0].bound, failures,
        rounds_checked=algo.T * cfg.replicas if cfg.checks else 0,
        runtime=time.perf_counter() - t0,
        extra={"sum_sqrt_v": np.array([res.sum_sqrt_v for res in results]), "K": algo.K},
    )
    return report, traces, results


def run_exp3(cfg: ExperimentConfig):
    t0 = time.perf_counter()
    eps = cfg.eps_value()
    advs = [e3.make_adversary(cfg.source, cfg.T, rng_for(cfg.seed, r, "adversary"))
            for r in range(cfg.replicas)]
    U = np.stack([rng_for(cfg.seed, r, "exp3").uniform(size=cfg.T) for r in range(cfg.replicas)])
    rep = e3.run_exp3_episodes(advs, cfg.T, cfg.grid, eps, U)
    report = RegretReport("exp3", rep.regrets, rep.t23_reference, {},
                          runtime=time.perf_counter() - t0, extra={"K": rep.K})
    return report, rep


def run_fullinfo(cfg: ExperimentConfig):
    t0 = time.perf_counter()
    prior = fi.random_simplex_prior(rng_for(cfg.seed, 0, "prior:simplex"), cfg.n, cfg.T, cfg.M)
    rep = fi.analyse(prior, cfg.mode, rng_for(cfg.seed, 0, "mc"))
    failures = {
        "tv": int(np.sum(~rep.tv_holds())),
        "martingale": int(not rep.martingale_ok),
        "simplex": int(rep.simplex_gap > 1e-9),
        "neyman": int(rep.total_variation > rep.neyman_bound),
        "regret": int(rep.regret > rep.neyman_bound),
    }
    report = RegretReport("fullinfo", np.array([rep.regret]), rep.neyman_bound, failures,
                          rounds_checked=cfg.T, runtime=time.perf_counter() - t0,
                          extra={"mode": rep.mode})
    return report, rep


def run_experiment(cfg: ExperimentConfig) -> RegretReport:
    """Run ``cfg`` and write its CSV files into ``cfg.out``."""
    out = Path(cfg.out)
    if cfg.kind == "bayes":
        report, traces, _ = run_bayes(cfg)
        emit_bayes(report, traces, out)
    elif cfg.kind == "info":
        report, traces, _ = run_bayes(replace(cfg, replicas=1))
        emit_info(traces[0], out)
    elif cfg.kind == "exp3":
        report, rep = run_exp3(cfg)
        emit_exp3(rep, out)
    else:
        report, rep = run_fullinfo(cfg)
        emit_fullinfo(rep, out)
    return report


# --------------------------------------------------------------------------
# CSV emission
# --------------------------------------------------------------------------

TRACE_HEADER = ("t", "i_star", "alpha_S", "pi_istar", "X_t", "loss", "r_t", "v_t", "I_t",
                "sumS_alpha_over_w", "flags")


def trace_rows(traces):
    for tr in traces:
        yield (tr.t, tr.i_star, tr.alpha_S, tr.pi_istar, tr.X_t, tr.loss,
               tr.E_r, tr.E_v, tr.E_I, tr.sum_alpha_over_w, tr.flag_string())


def emit_bayes(report: RegretReport, traces, directory) -> list:
    directory = Path(directory)
    files = [write_csv(directory / f"trace_{r}.csv", TRACE_HEADER, trace_rows(tr))
             for r, tr in enumerate(traces)]
    passed = [not any(not t.ok for t in tr) for tr in traces]
    rows = [(r, report.regrets[r], report.bound, passed[r]) for r in range(len(traces))]
    files.append(write_csv(directory / "report.csv",
                           ("replica", "regret", "bound", "passed_invariants"), rows))
    return files


def emit_info(traces, directory) -> Path:
    rows = ((tr.t, tr.E_r, tr.E_v, tr.E_I, tr.H, tr.flags.get("pinsker", True)) for tr in traces)
    return write_csv(Path(directory) / "info.csv",
                     ("t", "E_r", "E_v", "E_I", "H_t", "pinsker_ok"), rows)


def emit_exp3(rep: e3.Exp3Report, directory) -> Path:
    rows = ((r, rep.K, g, rep.t23_reference) for r, g in enumerate(rep.regrets))
    return write_csv(Path(directory) / "exp3_report.csv",
                     ("replica", "K", "regret", "t23_reference"), rows)


def emit_fullinfo(rep: fi.FullInfoReport, directory) -> Path:
    cum = rep.cum_tv
    rows = ((t + 1, rep.lhs_tv[t], rep.rhs_tv[t], cum[t], fi.neyman_bound(t + 1, rep.n))
            for t in range(rep.T))
    return write_csv(Path(directory) / "fullinfo.csv",
                     ("t", "lhs_tv", "rhs_tv", "cum_tv", "neyman_bound"), rows)


def emit_lemma(which: str, lhs, rhs, directory) -> Path:
    rows = ((a, b, a - b) for a, b in zip(lhs, rhs))
    return write_csv(Path(directory) / f"lemma_{which}.csv", ("lhs", "rhs", "margin"), rows)
