"""Command-line entry point: ``ddeif {run,mc,scenario,validate}``."""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

import numpy as np

from .harness.config import SCENARIOS, ConfigError, SimConfig, dump_config, load_config, scenario
from .harness.episode import run_episode
from .harness.export import export_results
from .harness.montecarlo import reduce_log, run_monte_carlo, summarize
from .harness.validate import run_checks

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _config(args: argparse.Namespace) -> SimConfig:
    if getattr(args, "config", None):
        cfg = load_config(args.config)
    elif getattr(args, "scenario", None):
        cfg = scenario(args.scenario)
    else:
        cfg = SimConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _report(summary) -> None:
    for g, err in summary.err_mean.items():
        print(f"{g:12s} mean error {np.nanmean(err):.4g}  final {err[-1]:.4g}")
    if summary.nees_mean is not None:
        print(f"position NEES (time average) {np.nanmean(summary.nees_mean):.4g}")


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _config(args).replace(runs=1)
    log = run_episode(cfg)
    summary = summarize(cfg, [reduce_log(log, cfg.report_agent)])
    if log.diverged:
        print(f"seed {log.seed} diverged at t = {log.diverged_at:.2f} s: {log.message}", file=sys.stderr)
        return EXIT_DIVERGED
    _report(summary)
    if args.out:
        for p in export_results(cfg, summary, args.out):
            print(p)
    return EXIT_OK


def cmd_mc(args: argparse.Namespace) -> int:
    cfg = _config(args)
    if args.runs is not None:
        cfg = cfg.replace(runs=args.runs)
    summary = run_monte_carlo(cfg, workers=args.parallel)
    print(f"{summary.completed}/{len(summary.seeds)} runs completed")
    if summary.diverged:
        print(f"diverged seeds: {summary.diverged}", file=sys.stderr)
    if summary.completed == 0:
        return EXIT_DIVERGED
    _report(summary)
    if args.out:
        for p in export_results(cfg, summary, args.out):
            print(p)
    return EXIT_DIVERGED if summary.diverged else EXIT_OK


def cmd_scenario(args: argparse.Namespace) -> int:
    cfg = scenario(args.name)
    if args.dump:
        print(dump_config(cfg), end="")
        return EXIT_OK
    args.config = None
    args.scenario = args.name
    return cmd_mc(args)


def cmd_validate(args: argparse.Namespace) -> int:
    ok = True
    for name, value, tol, passed in run_checks(args.seed or 0):
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {value:.3g} (tolerance {tol:g})")
    return EXIT_OK if ok else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddeif", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="YAML config file or a run manifest")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", help="output directory for CSVs and the manifest")

    p = sub.add_parser("run", help="run one episode")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("mc", help="Monte Carlo campaign")
    common(p)
    p.add_argument("--runs", type=int, help="number of runs (default: config, 50)")
    p.add_argument("--parallel", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("scenario", help="Monte Carlo campaign from a preset")
    p.add_argument("name", choices=SCENARIOS)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--runs", type=int)
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--dump", action="store_true", help="print the preset as YAML and exit")
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("validate", help="run the built-in oracle checks")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
