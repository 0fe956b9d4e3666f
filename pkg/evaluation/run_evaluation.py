#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Evaluation runner for the chain-federated robustness experiments
Runs the full experiment grid and compares the results with the reference tables
"""

import sys
import time
from pathlib import Path
from typing import List, Tuple

# Add parent directory to path
sys.path.append(str(Path(__file__).parent.parent))

from app.errors import ChainFLError, exit_code_for
from app.models import Architecture, ExperimentConfig, GradientPoisonSpec, NoAttack, WatermarkSpec
from app.services import emit_report, load_config, load_report, run_experiment
from app.settings import settings
from evaluation.comparison import compare_reports, failed_checks, print_comparison
from evaluation.reference_tables import ReferenceTables

POISON_FRACTIONS = [0.0, 0.25, 0.1, 0.01, 0.005]  # 0: clean model, evaluated on marked samples too
GRADIENT_MULTIPLIERS = [-1.0, -10.0, 0.0]
ATTACKED_ARCHITECTURES = [Architecture.horichain, Architecture.verticomb]


def grid_configs(base: ExperimentConfig) -> List[Tuple[str, ExperimentConfig]]:
    """Every cell of the reference grid, built on the data and scale of `base`"""
    cells = []
    for arch in Architecture:
        cells.append((f"{arch.value}_baseline", base.model_copy(update={"architecture": arch, "attack": NoAttack()})))
    for arch in ATTACKED_ARCHITECTURES:
        for fraction in POISON_FRACTIONS:
            attack = WatermarkSpec(poison_fraction=fraction)
            cells.append((f"{arch.value}_watermark_{fraction:g}",
                          base.model_copy(update={"architecture": arch, "attack": attack})))
        for multiplier in GRADIENT_MULTIPLIERS:
            attack = GradientPoisonSpec(multiplier=multiplier)
            cells.append((f"{arch.value}_gradient_{multiplier:g}",
                          base.model_copy(update={"architecture": arch, "attack": attack})))
    return cells


def run_grid(config_path: str, output_dir: str = None) -> int:
    """Run the full grid and write one report per cell plus a combined comparison"""
    print("🚀 FULL GRID - CHAIN FEDERATED LEARNING")
    print("=" * 50)

    base = load_config(Path(config_path))
    out = Path(output_dir) if output_dir else (base.output_dir or settings.output_dir)
    cells = grid_configs(base)
    print(f"✅ {len(cells)} configurations, {base.n_runs} runs each, subsample {base.subsample_fraction:g}")

    reports = []
    for i, (name, config) in enumerate(cells, 1):
        print(f"\n{i}. {name}")
        started = time.perf_counter()
        try:
            report = run_experiment(config.model_copy(update={"output_dir": out / name}))
            emit_report(report, out / name)
        except ChainFLError as e:
            print(f"   ❌ [{e.category}] {e}")
            continue
        reports.append(report)
        for key, cell in sorted(report.averaged.items()):
            print(f"   📊 {key}: {cell.accuracy.mean:.3f} ± {cell.accuracy.std:.3f}")
        print(f"   ⏱️ {time.perf_counter() - started:.1f}s")

    comparison = compare_reports(reports)
    comparison.to_csv(out / "comparison.csv", index=False, float_format="%.6f")
    print_comparison(comparison)
    print(f"\n📁 Results saved to: {out}")

    if len(reports) < len(cells):
        print(f"⚠️ {len(cells) - len(reports)} configurations failed")
        return 1
    return 1 if len(failed_checks(comparison)) else 0


def compare_directories(directories: List[str]) -> int:
    """Compare already emitted reports"""
    try:
        reports = [load_report(Path(d)) for d in directories]
    except ChainFLError as e:
        print(f"❌ [{e.category}] {e}")
        return exit_code_for(e.category)
    comparison = compare_reports(reports)
    print_comparison(comparison)
    return 1 if len(failed_checks(comparison)) else 0


def show_reference_info():
    """Show information about the reference tables"""
    print("📊 REFERENCE TABLES")
    print("=" * 50)

    tables = ReferenceTables()
    stats = tables.get_statistics()

    print(f"Total cases: {stats['total_cases']} ({stats['gating_cases']} gating)")

    print(f"\nBy category:")
    for category, count in stats['by_category'].items():
        print(f"  {category}: {count}")

    print(f"\nBy metric:")
    for metric, count in stats['by_metric'].items():
        print(f"  {metric}: {count}")

    print(f"\nGating cases:")
    for case in tables.get_all_cases():
        if case.gating:
            print(f"  {case.config_key} {case.metric}: {case.expected:.3f} in [{case.lower:.3f}, {case.upper:.3f}]")


def main():
    """Main function"""
    if len(sys.argv) > 1:
        command = sys.argv[1]
        if command == "grid" and len(sys.argv) > 2:
            sys.exit(run_grid(sys.argv[2], sys.argv[3] if len(sys.argv) > 3 else None))
        elif command == "compare" and len(sys.argv) > 2:
            sys.exit(compare_directories(sys.argv[2:]))
        elif command == "dataset":
            show_reference_info()
        else:
            print(f"❌ Unknown command: {command}")
            print("Available commands: grid <config> [output_dir], compare <report...>, dataset")
            sys.exit(2)
    else:
        print("🏆 CHAIN FEDERATED LEARNING EVALUATION")
        print("=" * 50)
        print("Available commands:")
        print("  python evaluation/run_evaluation.py grid <config> [output_dir]  - Run the full experiment grid")
        print("  python evaluation/run_evaluation.py compare <report...>        - Compare emitted reports")
        print("  python evaluation/run_evaluation.py dataset                    - Show reference tables")


if __name__ == "__main__":
    main()
