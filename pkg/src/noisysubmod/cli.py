"""Command-line entry point.

Exit codes: 0 success, 1 failed check or infeasible output, 2 configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys

from .harness import (ConfigError, InfeasibleOutput, InstanceSpec, TrialConfig, demo_counterexample,
                      exact_opt, generate_instance, run_trials, run_verify, summarize, write_csv)
from .solvers import ALGORITHMS, SolverOptions, solve

REGIMES = ("auto",) + ALGORITHMS


def _common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=0.2)
    p.add_argument("--sample-multiplier", type=float, default=1.0)
    p.add_argument("--strict", "--strict-paper", dest="strict", action="store_true",
                   help="run the full iteration cap instead of stopping after a scan without improvement")
    p.add_argument("--out", default=None)


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="noisysubmod",
                                 description="Noisy local search for monotone submodular maximization")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one instance and print a report")
    p.add_argument("--instance", required=True)
    p.add_argument("--algorithm", choices=REGIMES, default="auto")
    p.add_argument("--regime", choices=REGIMES, default=None, help="alias of --algorithm")
    p.add_argument("--bundle-size", type=int, default=3)
    p.add_argument("--opt", action="store_true", help="also compute the exact optimum")
    _common(p)

    p = sub.add_parser("experiment", help="run a trial config and write a CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--algorithm", action="append", choices=REGIMES, default=None)
    p.add_argument("--regime", choices=REGIMES, default=None)
    _common(p)

    p = sub.add_parser("verify", help="run the desk-scale self checks")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("demo-counterexample", help="bundle greedy on the adversarial partition instance")
    p.add_argument("--trials", type=int, default=400)
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--r", type=int, default=4)
    p.add_argument("--m", type=float, default=10.0)
    p.add_argument("--c", type=int, default=3)
    p.add_argument("--no-local-search", action="store_true")
    _common(p)

    p = sub.add_parser("gen", help="generate an instance file")
    p.add_argument("--kind", required=True,
                   choices=("random_coverage", "random_facility", "partition_adversary"))
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="generator parameter; values are parsed as JSON when possible")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    return ap


def _cmd_solve(args):
    instance = InstanceSpec.load(args.instance)
    f, C = instance.build()
    opts = SolverOptions(eps=args.epsilon, seed=args.seed, sample_multiplier=args.sample_multiplier,
                         strict=args.strict)
    rep = solve(instance.oracle(args.seed), C, opts, regime=args.regime or args.algorithm,
                bundle_size=args.bundle_size)
    out = {"algorithm": rep.algorithm, "chosen": list(rep.chosen), "value": rep.value,
           "queries": rep.queries, "feasible": rep.feasible, "params": rep.params}
    if args.opt:
        out["opt"] = exact_opt(f, C)[1]
        out["ratio"] = rep.value / out["opt"] if out["opt"] else None
    text = json.dumps(out, indent=1, default=str)
    print(text)
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(rep.to_dict(), fh, indent=1, default=str)
    return 0 if rep.feasible else 1


def _cmd_experiment(args):
    with open(args.config) as fh:
        d = json.load(fh)
    if args.algorithm:
        d["algorithms"] = args.algorithm
    if args.regime:
        d["regime"] = args.regime
    if args.out:
        d["out"] = args.out
    d.setdefault("eps", args.epsilon)
    if args.sample_multiplier != 1.0:
        d["sample_multiplier"] = args.sample_multiplier
    if args.strict:
        d["strict"] = True
    cfg = TrialConfig.from_dict(d)
    rows = run_trials(cfg)
    print(json.dumps(summarize(rows), indent=1))
    return 0


def _cmd_verify(args):
    checks = run_verify(args.seed)
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
    return 0 if all(ok for _, ok, _ in checks) else 1


def _cmd_demo(args):
    res = demo_counterexample(trials=args.trials, n=args.n, r=args.r, m=args.m, c=args.c,
                              seed0=args.seed, eps=args.epsilon,
                              with_local_search=not args.no_local_search)
    print(f"trials: {res.trials}")
    print(f"bundle greedy misses the heavy element: {res.miss_frequency:.3f} (threshold 0.25)")
    print(f"bundle greedy mean ratio: {res.bundle_mean_ratio:.3f} (cap 0.5)")
    if res.local_search_mean_ratio is not None:
        print(f"matroid-small mean ratio: {res.local_search_mean_ratio:.3f} (floor 0.6)")
    if args.out:
        write_csv(res.rows, args.out)
    return 0 if res.passed else 1


def _cmd_gen(args):
    params = {}
    for item in args.param:
        if "=" not in item:
            raise ConfigError(f"parameter {item!r} is not KEY=VALUE")
        k, v = item.split("=", 1)
        params[k] = _parse_value(v)
    instance = generate_instance(args.kind, params, args.seed)
    if args.out:
        instance.save(args.out)
    else:
        print(instance.to_json())
    return 0


COMMANDS = {"solve": _cmd_solve, "experiment": _cmd_experiment, "verify": _cmd_verify,
            "demo-counterexample": _cmd_demo, "gen": _cmd_gen}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except InfeasibleOutput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
