"""Command line entry point: ``bco-lab <subcommand> [options]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import acceptance
from . import exp3_grid as e3
from . import harness as hz
from .convexfn import FAMILIES, Grid, make_convex
from .lemma_lab import check_local_to_global, net_delta, search_violations, uniform_net


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default, help="master seed")
    parser.add_argument("--out", default=default, help="output directory")
    parser.add_argument("--threads", type=int, default=default,
                        help="worker processes (default: $BCO_LAB_THREADS or 1)")
    parser.add_argument("--config", default=default, help="flat key = value config file")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bco-lab", description=__doc__)
    _global_flags(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help):
        sp = sub.add_parser(name, help=help)
        _global_flags(sp, suppress=True)
        return sp

    sp = add("run-bayes", "modified Thompson Sampling against a finite prior")
    sp.add_argument("--prior", dest="source", help="built-in prior name or prior directory")
    sp.add_argument("--T", type=int)
    sp.add_argument("--eps", help="float or 'auto' (1/sqrt(T))")
    sp.add_argument("--M", type=int, help="scenarios for built-in priors")
    sp.add_argument("--replicas", type=int)
    sp.add_argument("--no-checks", dest="checks", action="store_false", default=None,
                    help="skip the per-round lemma checks")

    sp = add("info-ratio", "per-round information diagnostics for one episode")
    sp.add_argument("--prior", dest="source")
    sp.add_argument("--T", type=int)
    sp.add_argument("--eps")
    sp.add_argument("--M", type=int)

    sp = add("run-exp3", "Exp3 over a finite grid against an oblivious adversary")
    sp.add_argument("--adversary", dest="source", choices=e3.ADVERSARIES)
    sp.add_argument("--T", type=int)
    sp.add_argument("--grid", choices=("geometric", "uniform"))
    sp.add_argument("--eps", help="float or 'auto' (T^(-1/3))")
    sp.add_argument("--replicas", type=int)

    sp = add("run-fullinfo", "Doob strategy on the simplex, exact or Monte Carlo")
    sp.add_argument("--n", type=int)
    sp.add_argument("--T", type=int)
    sp.add_argument("--M", type=int)
    sp.add_argument("--prior", dest="source", choices=("random",), default=None)
    sp.add_argument("--mode", choices=("exact", "mc"))

    sp = add("verify-lemma", "randomized checks of the standalone inequalities")
    sp.add_argument("--which", choices=("l2g", "sebgrid", "discretization"), required=True)
    sp.add_argument("--trials", type=int, default=None)

    sp = add("accept", "run the full acceptance suite")
    sp.add_argument("--quick", action="store_true", help="shrunken sweeps for smoke testing")
    return p


KIND_OF = {"run-bayes": "bayes", "info-ratio": "info", "run-exp3": "exp3", "run-fullinfo": "fullinfo"}
CONFIG_KEYS = ("source", "T", "eps", "M", "replicas", "checks", "n", "grid", "mode", "seed", "out")


def make_config(args) -> hz.ExperimentConfig:
    kind = KIND_OF[args.command]
    overrides = {k: getattr(args, k, None) for k in CONFIG_KEYS}
    overrides["kind"] = kind
    overrides["threads"] = hz.thread_count(getattr(args, "threads", None))
    if kind == "exp3" and overrides["source"] is None and not getattr(args, "config", None):
        overrides["source"] = "static-valley"
    if kind == "fullinfo":
        overrides["source"] = "random"
    if getattr(args, "config", None):
        return hz.load_config(args.config, **overrides)
    return hz.ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})


def cmd_verify(args) -> int:
    seed = args.seed or 0
    out = Path(args.out or "out")
    if args.which == "l2g":
        trials = args.trials or 100_000
        res = search_violations(hz.rng_for(seed, 0, "l2g"), Grid.uniform(50), trials, strict=False)
        sides = [check_local_to_global(inst)[:2] for inst in res.worst]
        hz.emit_lemma("l2g", [s[0] for s in sides], [s[1] for s in sides], out)
        print(f"{res.trials} instances, {res.violations} violations, min margin {res.min_margin:.3g}")
        return int(res.violations > 0)
    n = args.trials or 10_000
    if args.which == "sebgrid":
        eps_list = acceptance.GAP_EPS
        nets = {eps: e3.build_geometric_grid(eps).points for eps in eps_list}
        scale = 2.0
    else:
        eps_list = acceptance.DISCRET_EPS
        nets = {eps: uniform_net(net_delta(eps)).points for eps in eps_list}
        scale = 1.0
    worst = {eps: -np.inf for eps in eps_list}
    for fam in FAMILIES:
        rng = hz.rng_for(seed, 0, f"{args.which}:{fam}")
        for _ in range(n // len(FAMILIES)):
            f = make_convex(rng, fam)
            for eps, pts in nets.items():
                worst[eps] = max(worst[eps], float(np.min(f(pts))) - f.min_value)
    lhs = [worst[eps] for eps in eps_list]
    rhs = [scale * eps for eps in eps_list]
    hz.emit_lemma(args.which, lhs, rhs, out)
    bad = sum(a > b for a, b in zip(lhs, rhs))
    print(f"{args.which}: {bad} of {len(eps_list)} eps values exceed the bound")
    return int(bad > 0)


def cmd_accept(args) -> int:
    scale = "quick" if args.quick else "full"
    results = acceptance.run_all(args.seed or 0, scale)
    out = Path(args.out or "out")
    hz.write_csv(out / "report.csv", ("criterion", "name", "passed", "detail", "runtime_s"),
                 ((r.number, r.name, r.passed, r.detail, r.runtime) for r in results))
    return int(not all(r.passed for r in results))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify-lemma":
            return cmd_verify(args)
        if args.command == "accept":
            return cmd_accept(args)
        cfg = make_config(args)
        report = hz.run_experiment(cfg)
    except (ValueError, OSError) as exc:
        print(f"bco-lab: error: {exc}", file=sys.stderr)
        return 2
    label = "T^(2/3) reference" if cfg.kind == "exp3" else "bound"
    print(f"{cfg.kind}: mean regret {report.mean:.6g} ± {report.stderr:.3g} "
          f"({label} {report.bound:.6g}), runtime {report.runtime:.2f}s")
    failed = {k: v for k, v in report.invariant_failures.items() if v}
    if failed:
        print("invariant failures: " + ", ".join(f"{k}={v}" for k, v in failed.items()))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
