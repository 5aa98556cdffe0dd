"""Command-line entry point.

Subcommands:

* ``run --config cfg.json [--seed S] [--out DIR] [--threads N]`` runs a
  declarative experiment config (JSON, schema documented in the README).
* ``reproduce --figure NAME [...]`` runs a canned configuration matching
  one of the studied settings (ishigami-full, borehole-full,
  ishigami-sparse, borehole-sparse, naive-sparse).
* ``validate`` runs the oracle-equivalence self-test suite.

Exit codes: 0 success, 1 run/validation failure, 2 usage error.
The ``CONFPCE_OUT`` environment variable overrides the output directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .errors import ConfigError
from .experiment import (
    PAPER_FIGURES,
    ExperimentConfig,
    emit_report,
    paper_config,
    run_experiment,
)


def _add_common(parser):
    parser.add_argument("--seed", type=int, default=None, help="master seed override")
    parser.add_argument("--out", type=str, default=None, help="output directory")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker processes across replications")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="confpce",
                                     description="Conformalized polynomial chaos experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment from a JSON config")
    run_p.add_argument("--config", required=True, help="path to the config file")
    _add_common(run_p)

    rep_p = sub.add_parser("reproduce", help="run a canned study setting")
    rep_p.add_argument("--figure", required=True, choices=sorted(PAPER_FIGURES))
    rep_p.add_argument("--replications", type=int, default=100)
    rep_p.add_argument("--n-val", type=int, default=1000)
    rep_p.add_argument("--n-cal", type=int, default=1_000_000,
                       help="calibration size of the split reference")
    _add_common(rep_p)

    sub.add_parser("validate", help="run the oracle-equivalence self tests")
    return parser


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    d = cfg.to_dict()
    if args.seed is not None:
        d["seed"] = args.seed
    if args.out is not None:
        d["output_dir"] = args.out
    if os.environ.get("CONFPCE_OUT"):
        d["output_dir"] = os.environ["CONFPCE_OUT"]
    if args.threads is not None:
        d["threads"] = args.threads
    return ExperimentConfig.from_dict(d)


def _cmd_run(args) -> int:
    try:
        with open(args.config) as fh:
            cfg = ExperimentConfig.from_dict(json.load(fh))
    except FileNotFoundError:
        print(f"config not found: {args.config}", file=sys.stderr)
        return 2
    except (json.JSONDecodeError, ConfigError, TypeError) as exc:
        print(f"bad config: {exc}", file=sys.stderr)
        return 2
    cfg = _apply_overrides(cfg, args)
    return _execute(cfg)


def _cmd_reproduce(args) -> int:
    cfg = paper_config(args.figure, seed=args.seed if args.seed is not None else 0,
                       n_replications=args.replications, n_val=args.n_val,
                       n_cal=args.n_cal)
    cfg = _apply_overrides(cfg, args)
    return _execute(cfg)


def _execute(cfg: ExperimentConfig) -> int:
    try:
        cfg.validate()
    except ConfigError as exc:
        print(f"bad config: {exc}", file=sys.stderr)
        return 2
    try:
        report = run_experiment(cfg)
    except Exception as exc:
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    paths = emit_report(report, cfg.output_dir)
    for path in paths:
        print(path)
    agg = report["aggregate"]
    for name, stats in agg.items():
        cov = stats.get("mean_coverage", {})
        line = ", ".join(f"{lv}:{c:.3f}" for lv, c in cov.items())
        print(f"{name}: mean coverage {{{line}}}")
    return 0


def _cmd_validate() -> int:
    from . import validate as validation

    rows = validation.run_all()
    width = max(len(r.name) for r in rows)
    ok = True
    for row in rows:
        status = "PASS" if row.passed else "FAIL"
        ok &= row.passed
        print(f"{row.name:<{width}}  {status}  {row.detail}")
    print("all checks passed" if ok else "SOME CHECKS FAILED")
    return 0 if ok else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    np.seterr(over="warn")
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "reproduce":
        return _cmd_reproduce(args)
    return _cmd_validate()


if __name__ == "__main__":
    sys.exit(main())
