"""Run a trial config (JSON) and write per-run rows to CSV plus a summary table.

Usage:
    python3 scripts/run_experiment.py scripts/configs/coverage_uniform.json --out runs.csv
"""
from __future__ import annotations

import argparse
import json
import sys

from noisysubmod.harness import TrialConfig, run_trials, summarize


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--out", default=None, help="CSV path; overrides the config's out field")
    ap.add_argument("--seeds", type=int, default=None, help="use seeds 0..N-1 instead of the config list")
    args = ap.parse_args(argv)

    with open(args.config) as fh:
        d = json.load(fh)
    if args.out:
        d["out"] = args.out
    if args.seeds is not None:
        d["seeds"] = list(range(args.seeds))
    cfg = TrialConfig.from_dict(d)
    rows = run_trials(cfg)
    summary = summarize(rows)

    print(f"{'algorithm':<16}{'runs':>6}{'mean ratio':>12}{'min ratio':>11}{'mean queries':>15}")
    for algo, s in summary.items():
        print(f"{algo:<16}{s['runs']:>6}{s.get('mean_ratio', float('nan')):>12.4f}"
              f"{s.get('min_ratio', float('nan')):>11.4f}{s['mean_queries']:>15.0f}")
    if cfg.out:
        print(f"rows written to {cfg.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
