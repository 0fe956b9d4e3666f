#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Command-line entry point: run experiments, compare reports, render confusion matrices
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .errors import ChainFLError, ReportIOError, exit_code_for
from .services import emit_report, load_config, load_report, run_experiment, write_confusion, write_importance_chart
from .settings import settings


def setup_logging():
    level = logging.DEBUG if settings.debug else getattr(logging, settings.log_level.upper(), logging.INFO)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def cmd_run(args) -> int:
    config = load_config(Path(args.config))
    output_dir = Path(args.output) if args.output else (config.output_dir or settings.output_dir)

    print(f"🚀 {settings.project_name}: {config.name or config.architecture.value}")
    print(f"   attack: {config.attack.kind}, runs: {config.n_runs}, subsample: {config.subsample_fraction:g}")

    checkpoint_dir = output_dir / "checkpoints" if config.save_checkpoints else None
    report = run_experiment(config, checkpoint_dir=checkpoint_dir)
    emit_report(report, output_dir)

    for key, cell in sorted(report.averaged.items()):
        line = f"📊 {key}: accuracy {cell.accuracy.mean:.3f} ± {cell.accuracy.std:.3f}, F1 {cell.macro_f1.mean:.3f}"
        if cell.attack_success_rate is not None:
            line += f", attack success {cell.attack_success_rate.mean:.3f}"
        print(line)
    if report.importance is not None and report.importance.shares is not None:
        shares = ", ".join(f"{s:.3f}" for s in report.importance.shares)
        print(f"🧭 client importance: {shares}")
    print(f"📁 Report saved to: {output_dir}")
    return 0


def cmd_compare(args) -> int:
    from evaluation.comparison import compare_reports, failed_checks, print_comparison

    reports = [load_report(Path(d)) for d in args.reports]
    comparison = compare_reports(reports)
    print_comparison(comparison)
    if args.output:
        comparison.to_csv(args.output, index=False, float_format="%.6f")
        print(f"📁 Comparison saved to: {args.output}")
    return 1 if len(failed_checks(comparison)) else 0


def cmd_render(args) -> int:
    directory = Path(args.report)
    report = load_report(directory)
    target = Path(args.output) if args.output else directory
    try:
        target.mkdir(parents=True, exist_ok=True)
        for _, cell in sorted(report.averaged.items()):
            for path in write_confusion(cell.representative_confusion, target, f"confusion_{cell.eval_mode.value}"):
                print(f"🖼️ {path}")
        if report.importance is not None:
            print(f"🖼️ {write_importance_chart(report.importance, target)}")
    except OSError as e:
        raise ReportIOError(f"cannot write renderings: {e}", directory=str(target))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chainfl", description=settings.project_name)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a YAML config")
    run.add_argument("config")
    run.add_argument("-o", "--output", help="report directory (default: config output_dir or OUTPUT_DIR)")
    run.set_defaults(handler=cmd_run)

    compare = sub.add_parser("compare", help="compare reports with the reference tables")
    compare.add_argument("reports", nargs="+")
    compare.add_argument("-o", "--output", help="write the comparison table to this CSV file")
    compare.set_defaults(handler=cmd_compare)

    render = sub.add_parser("render", help="render the confusion matrices and importance chart of a report")
    render.add_argument("report")
    render.add_argument("-o", "--output")
    render.set_defaults(handler=cmd_render)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging()
    try:
        return args.handler(args)
    except ChainFLError as e:
        print(f"❌ [{e.category}] {e}", file=sys.stderr)
        return exit_code_for(e.category)


if __name__ == "__main__":
    sys.exit(main())
