#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Report comparison against the reference tables
One row per reference cell found in the reports, plus cross-cell checks
"""

from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from app.models import EvalMode, ExperimentReport, NoAttack
from evaluation.reference_tables import DESK_WIDENING, ReferenceCase, ReferenceTables

COLUMNS = [
    "check", "config_key", "metric", "expected", "observed",
    "lower", "upper", "gating", "passed", "description",
]
IMPORTANCE_SHARE_TOLERANCE = 0.05
LAST_CLIENT_DOMINANCE = 1.5


def is_desk_scale(report: ExperimentReport) -> bool:
    return report.config.subsample_fraction < 1.0


def _train_accuracy(report: ExperimentReport) -> Optional[float]:
    finals = [run.history[-1].train_accuracy for run in report.runs if run.history]
    finals = [a for a in finals if a is not None]
    return float(np.mean(finals)) if finals else None


def observed_value(report: ExperimentReport, config_key: str, metric: str) -> Optional[float]:
    """Averaged value of `metric` for `config_key`, None when the report lacks it"""
    cell = report.averaged.get(config_key)
    if cell is None:
        return None
    if metric == "accuracy":
        return cell.accuracy.mean
    if metric == "macro_f1":
        return cell.macro_f1.mean
    if metric == "train_accuracy":
        return _train_accuracy(report)
    raise ValueError(f"unknown metric: {metric}")


def _band_row(case: ReferenceCase, observed: float) -> Dict[str, Any]:
    return {
        "check": "band",
        "config_key": case.config_key,
        "metric": case.metric,
        "expected": case.expected,
        "observed": observed,
        "lower": case.lower,
        "upper": case.upper,
        "gating": case.gating,
        "passed": bool(case.lower <= observed <= case.upper),
        "description": case.description,
    }


def _relation_row(check: str, config_key: str, observed: float, passed: bool, description: str) -> Dict[str, Any]:
    return {
        "check": check,
        "config_key": config_key,
        "metric": "accuracy",
        "expected": np.nan,
        "observed": observed,
        "lower": np.nan,
        "upper": np.nan,
        "gating": True,
        "passed": bool(passed),
        "description": description,
    }


# =============================================================================
# CROSS-CELL CHECKS
# =============================================================================

def _baseline_means(reports: Sequence[ExperimentReport]) -> Dict[str, float]:
    means = {}
    for report in reports:
        for key, cell in report.averaged.items():
            arch, attack, mode = key.split("/")
            if attack == "none" and mode == EvalMode.unmarked.value:
                means[arch] = cell.accuracy.mean
    return means


def _ordering_rows(baselines: Dict[str, float]) -> List[Dict[str, Any]]:
    if not {"horichain", "vertichain", "verticomb"} <= set(baselines):
        return []
    ceiling = min(baselines["horichain"], baselines["verticomb"])
    return [_relation_row(
        "ordering", "vertichain/none/unmarked", baselines["vertichain"],
        baselines["vertichain"] < ceiling,
        "VertiChain baseline below both HoriChain and VertiComb",
    )]


def _delayed_learning_rows(reports: Sequence[ExperimentReport], baselines: Dict[str, float]) -> List[Dict[str, Any]]:
    rows = []
    for report in reports:
        for key, cell in report.averaged.items():
            arch, attack, _ = key.split("/")
            if attack == "gradient:0" and arch in baselines:
                rows.append(_relation_row(
                    "below_baseline", key, cell.accuracy.mean, cell.accuracy.mean < baselines[arch],
                    f"frozen updates stay below the {arch} baseline ({baselines[arch]:.3f})",
                ))
    return rows


def _trajectory_rows(reports: Sequence[ExperimentReport]) -> List[Dict[str, Any]]:
    rows = []
    for report in reports:
        key = "verticomb/gradient:-1/unmarked"
        if key not in report.averaged:
            continue
        histories = [run.history for run in report.runs if len(run.history) >= 2]
        if not histories:
            continue
        first = float(np.mean([h[0].test_accuracy for h in histories]))
        last = float(np.mean([h[-1].test_accuracy for h in histories]))
        rows.append(_relation_row(
            "trajectory", key, last, last < first,
            f"test accuracy falls from the first epoch ({first:.3f})",
        ))
    return rows


def _last_client(report: ExperimentReport) -> int:
    config = report.config
    return config.chain_order[-1] if config.chain_order else config.active_id


def _importance_rows(reports: Sequence[ExperimentReport]) -> List[Dict[str, Any]]:
    rows = []
    for report in reports:
        profile = report.importance
        if profile is None or profile.shares is None or not isinstance(report.config.attack, NoAttack):
            continue
        arch = report.config.architecture.value
        key = f"{arch}/none/unmarked"
        shares = np.asarray(profile.shares)

        if arch == "horichain":
            equal = 1.0 / len(shares)
            worst = float(np.max(np.abs(shares - equal)))
            rows.append(_relation_row(
                "importance_equal", key, worst, worst <= IMPORTANCE_SHARE_TOLERANCE,
                f"every share within {IMPORTANCE_SHARE_TOLERANCE} of 1/{len(shares)}",
            ))
        elif arch == "vertichain":
            last = _last_client(report)
            others = np.delete(shares, last)
            dominant = shares[last] > np.max(others) and shares[last] >= LAST_CLIENT_DOMINANCE * np.median(shares)
            rows.append(_relation_row(
                "importance_last_client", key, float(shares[last]), dominant,
                f"last client share is the maximum and at least {LAST_CLIENT_DOMINANCE}x the median",
            ))
    return rows


# =============================================================================
# COMPARISON
# =============================================================================

def compare_reports(reports: Sequence[ExperimentReport], tables: Optional[ReferenceTables] = None) -> pd.DataFrame:
    """Compare averaged report cells with the reference tables.

    Desk-scale reports (subsample_fraction < 1) use bands widened by 0.10.
    """
    tables = tables or ReferenceTables()
    rows: List[Dict[str, Any]] = []

    for report in reports:
        margin = DESK_WIDENING if is_desk_scale(report) else 0.0
        for key in sorted(report.averaged):
            for case in tables.get_cases_for_key(key):
                observed = observed_value(report, key, case.metric)
                if observed is None:
                    continue
                rows.append(_band_row(case.widened(margin) if margin else case, observed))

    baselines = _baseline_means(reports)
    rows += _ordering_rows(baselines)
    rows += _delayed_learning_rows(reports, baselines)
    rows += _trajectory_rows(reports)
    rows += _importance_rows(reports)
    return pd.DataFrame(rows, columns=COLUMNS)


def failed_checks(comparison: pd.DataFrame) -> pd.DataFrame:
    """Gating rows that did not pass"""
    if comparison.empty:
        return comparison
    return comparison[comparison["gating"] & ~comparison["passed"]]


def print_comparison(comparison: pd.DataFrame):
    """Print comparison results"""
    print("\n📊 REFERENCE COMPARISON")
    print("=" * 50)
    if comparison.empty:
        print("No reference cells found in the given reports.")
        return

    for _, row in comparison.iterrows():
        mark = "✅" if row["passed"] else ("❌" if row["gating"] else "⚠️")
        band = "" if np.isnan(row["lower"]) else f" in [{row['lower']:.3f}, {row['upper']:.3f}]"
        print(f"{mark} {row['config_key']} {row['metric']}: {row['observed']:.3f}{band} ({row['check']})")

    failed = failed_checks(comparison)
    gating = int(comparison["gating"].sum())
    print(f"\nPassed: {gating - len(failed)}/{gating} gating checks")
