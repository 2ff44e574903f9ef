"""Command-line interface.

Subcommands: ``validate-config``, ``metrics``, ``test``, ``matrix``,
``ensemble-auc``, ``exact``. Exit codes: 0 on success, 2 for configuration
errors, 3 for data errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .config import load_config, validate_config
from .errors import ConfigError, DataError
from .runner import (
    MetricPipeline,
    emit_ensemble_report,
    emit_metric_sets,
    emit_reports,
    run_cell,
    run_ensemble_auc,
    run_matrix,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latentperm",
        description="Permutation-based out-of-distribution testing over latent-response metrics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-config", help="parse a config and check its data files")
    p.add_argument("config")

    p = sub.add_parser("metrics", help="compute and export the joined metric sets")
    p.add_argument("config")
    p.add_argument("--out", default=None, help="output directory (default: config output.dir)")
    p.add_argument("--format", choices=("csv", "bin"), default="csv")

    p = sub.add_parser("test", help="run a single (row, col) comparison and print the report")
    p.add_argument("config")
    p.add_argument("--row", required=True, help="test-set group label")
    p.add_argument("--col", required=True, help="validation-set group label")

    p = sub.add_parser("matrix", help="run the full comparison matrix and write reports")
    p.add_argument("config")
    p.add_argument("--workers", type=int, default=1,
                   help="parallel cell workers; never changes any output byte")

    p = sub.add_parser("ensemble-auc", help="per-metric AUCs vs the linear-ensemble AUC")
    p.add_argument("config")

    p = sub.add_parser("exact", help="matrix (or one cell) with exhaustive enumeration")
    p.add_argument("config")
    p.add_argument("--row", default=None)
    p.add_argument("--col", default=None)
    p.add_argument("--workers", type=int, default=1)
    return parser


def _cmd_validate(args) -> int:
    config = load_config(args.config)
    summary = validate_config(config)
    print(json.dumps(summary, indent=2, sort_keys=True))
    print("config ok")
    return EXIT_OK


def _cmd_metrics(args) -> int:
    config = load_config(args.config)
    pipeline = MetricPipeline(config)
    out = args.out if args.out is not None else config.output_dir
    for path in emit_metric_sets(pipeline, out, fmt=args.format):
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_test(args) -> int:
    config = load_config(args.config)
    report = run_cell(config, args.row, args.col)
    print(json.dumps({"row": args.row, "col": args.col, **report.to_dict()},
                     indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_matrix(args, exact: bool = False) -> int:
    config = load_config(args.config)
    if getattr(args, "workers", 1) > 1:
        config = replace(config, workers=args.workers)
    if exact:
        config = replace(config, permutation=replace(config.permutation, exact=True))
    if exact and args.row is not None and args.col is not None:
        report = run_cell(config, args.row, args.col)
        print(json.dumps({"row": args.row, "col": args.col, **report.to_dict()},
                         indent=2, sort_keys=True))
        return EXIT_OK
    matrix = run_matrix(config)
    emit_reports(matrix, config.output_dir, config)
    print(f"wrote {config.output_dir}/statistic.csv, pvalues.csv, "
          f"{len(matrix.reports)} cell reports, manifest.json")
    return EXIT_OK


def _cmd_ensemble(args) -> int:
    config = load_config(args.config)
    report = run_ensemble_auc(config)
    width = max(len(n) for n in report.metric_names + ("__ensemble__",))
    for name, auc in zip(report.metric_names, report.single_aucs):
        print(f"{name:<{width}}  {auc:.4f}")
    print(f"{'__ensemble__':<{width}}  {report.ensemble:.4f}")
    emit_ensemble_report(report, config.output_dir)
    print(f"wrote {config.output_dir}/ensemble_auc.csv")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "validate-config":
            return _cmd_validate(args)
        if args.command == "metrics":
            return _cmd_metrics(args)
        if args.command == "test":
            return _cmd_test(args)
        if args.command == "matrix":
            return _cmd_matrix(args)
        if args.command == "exact":
            return _cmd_matrix(args, exact=True)
        if args.command == "ensemble-auc":
            return _cmd_ensemble(args)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        # contract violations surfaced by the engine (e.g. the exact-mode
        # bound, group-size preconditions) are data problems from the CLI's
        # point of view
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
