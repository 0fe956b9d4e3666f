#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Reference results for the chain-federated MNIST experiments
Published accuracy / F1 values with the tolerance bands reports are checked against
"""

from collections import Counter
from dataclasses import dataclass
from typing import Any, Dict, List

BASELINE_TEST_ACCURACY = {
    "horichain": 0.962,
    "vertichain": 0.881,
    "verticomb": 0.954,
}
DESK_WIDENING = 0.10

# clean model on the watermarked test set: (accuracy, macro F1)
CLEAN_ON_MARKED = {
    "horichain": (0.772, 0.762),
    "verticomb": (0.891, 0.887),
}


@dataclass
class ReferenceCase:
    """Single reference value for one (config, eval mode) cell"""
    config_key: str
    metric: str  # "accuracy", "macro_f1", "train_accuracy"
    expected: float
    lower: float
    upper: float
    category: str  # "baseline", "data_poisoning", "gradient_poisoning"
    gating: bool = True  # informational cases never fail a comparison
    description: str = ""

    def widened(self, margin: float) -> "ReferenceCase":
        return ReferenceCase(
            config_key=self.config_key,
            metric=self.metric,
            expected=self.expected,
            lower=max(0.0, self.lower - margin),
            upper=min(1.0, self.upper + margin),
            category=self.category,
            gating=self.gating,
            description=self.description,
        )


def _band(expected: float, tolerance: float) -> Dict[str, float]:
    return {"expected": expected, "lower": max(0.0, expected - tolerance), "upper": min(1.0, expected + tolerance)}


class ReferenceTables:
    """All reference cases, built once"""

    def __init__(self):
        self.cases: List[ReferenceCase] = []
        self._build_tables()

    def _build_tables(self):
        """Build the reference cases"""

        # =============================================================================
        # BASELINES
        # =============================================================================

        for arch, expected in BASELINE_TEST_ACCURACY.items():
            self.cases.append(ReferenceCase(
                config_key=f"{arch}/none/unmarked", metric="accuracy",
                category="baseline", description=f"{arch} test accuracy without attacks",
                **_band(expected, 0.05),
            ))

        for arch, expected in (("horichain", 0.958), ("vertichain", 0.885), ("verticomb", 0.978)):
            self.cases.append(ReferenceCase(
                config_key=f"{arch}/none/unmarked", metric="train_accuracy",
                category="baseline", gating=False, description=f"{arch} train accuracy without attacks",
                **_band(expected, 0.05),
            ))

        # =============================================================================
        # DATA POISONING (watermark backdoor)
        # =============================================================================

        # fraction -> (marked acc, marked f1, unmarked acc, unmarked f1) per architecture
        poisoning = {
            "horichain": {
                0.25: (0.0, 0.0, 0.955, 0.943),
                0.1: (0.0, 0.0, 0.958, 0.951),
                0.01: (0.0, 0.0, 0.949, 0.941),
                0.005: (0.211, 0.193, 0.951, 0.942),
            },
            "verticomb": {
                0.25: (0.0, 0.0, 0.912, 0.901),
                0.1: (0.0, 0.0, 0.949, 0.944),
                0.01: (0.0, 0.0, 0.932, 0.927),
                0.005: (0.0, 0.0, 0.846, 0.741),
            },
        }
        for arch, rows in poisoning.items():
            baseline = BASELINE_TEST_ACCURACY[arch]
            for fraction, (marked_acc, marked_f1, clean_acc, clean_f1) in rows.items():
                prefix = f"{arch}/watermark:{fraction:g}"

                if arch == "horichain" and fraction == 0.005:
                    marked = {"expected": marked_acc, "lower": 0.10, "upper": 1.0}
                    note = "small poison share does not fully take over HoriChain"
                else:
                    marked = {"expected": marked_acc, "lower": 0.0, "upper": 0.05}
                    note = "marked test samples collapse to the target label"
                self.cases.append(ReferenceCase(
                    config_key=f"{prefix}/watermarked", metric="accuracy",
                    category="data_poisoning", description=note, **marked,
                ))
                self.cases.append(ReferenceCase(
                    config_key=f"{prefix}/watermarked", metric="macro_f1",
                    category="data_poisoning", gating=False, description="marked-set F1",
                    **_band(marked_f1, 0.08),
                ))

                if fraction >= 0.01:
                    clean = {"expected": clean_acc, "lower": baseline - 0.06, "upper": min(1.0, baseline + 0.06)}
                    gating = True
                else:
                    clean = _band(clean_acc, 0.06)
                    gating = False
                self.cases.append(ReferenceCase(
                    config_key=f"{prefix}/unmarked", metric="accuracy",
                    category="data_poisoning", gating=gating,
                    description="unmarked accuracy stays near the baseline", **clean,
                ))
                self.cases.append(ReferenceCase(
                    config_key=f"{prefix}/unmarked", metric="macro_f1",
                    category="data_poisoning", gating=False, description="unmarked F1",
                    **_band(clean_f1, 0.08),
                ))

        # clean model (poison fraction 0) evaluated on the stamped test set
        for arch, (marked_acc, marked_f1) in CLEAN_ON_MARKED.items():
            prefix = f"{arch}/watermark:0"
            self.cases.append(ReferenceCase(
                config_key=f"{prefix}/watermarked", metric="accuracy",
                category="data_poisoning", gating=False,
                description="unpoisoned model on watermarked samples", **_band(marked_acc, 0.10),
            ))
            self.cases.append(ReferenceCase(
                config_key=f"{prefix}/watermarked", metric="macro_f1",
                category="data_poisoning", gating=False,
                description="unpoisoned model F1 on watermarked samples", **_band(marked_f1, 0.10),
            ))
            baseline = BASELINE_TEST_ACCURACY[arch]
            self.cases.append(ReferenceCase(
                config_key=f"{prefix}/unmarked", metric="accuracy",
                category="data_poisoning", description="no poison keeps the baseline accuracy",
                **_band(baseline, 0.06),
            ))

        # =============================================================================
        # GRADIENT POISONING
        # =============================================================================

        gradient = [
            ("horichain", -1.0, {"expected": 0.918, "lower": 0.85, "upper": 1.0}, 0.902,
             "negated updates from one holder are absorbed by the chain"),
            ("verticomb", -1.0, {"expected": 0.148, "lower": 0.0, "upper": 0.30}, 0.0,
             "negated passive component drags VertiComb down"),
            ("horichain", -10.0, _band(0.104, 0.06), 0.0, "random-level predictions"),
            ("verticomb", -10.0, _band(0.104, 0.06), 0.0, "random-level predictions"),
            ("horichain", 0.0, {"expected": 0.957, "lower": 0.90, "upper": 1.0}, 0.944,
             "frozen holder only delays learning"),
            ("verticomb", 0.0, {"expected": 0.921, "lower": 0.85, "upper": 1.0}, 0.907,
             "frozen passive component only delays learning"),
        ]
        for arch, multiplier, band, f1, note in gradient:
            key = f"{arch}/gradient:{multiplier:g}/unmarked"
            self.cases.append(ReferenceCase(
                config_key=key, metric="accuracy", category="gradient_poisoning", description=note, **band,
            ))
            self.cases.append(ReferenceCase(
                config_key=key, metric="macro_f1", category="gradient_poisoning", gating=False,
                description="test F1", **_band(f1, 0.08),
            ))

    def get_cases_by_category(self, category: str) -> List[ReferenceCase]:
        """Get reference cases by category"""
        return [c for c in self.cases if c.category == category]

    def get_cases_for_key(self, config_key: str) -> List[ReferenceCase]:
        return [c for c in self.cases if c.config_key == config_key]

    def get_all_cases(self) -> List[ReferenceCase]:
        """Get all reference cases"""
        return self.cases

    def get_statistics(self) -> Dict[str, Any]:
        """Get table statistics"""
        return {
            "total_cases": len(self.cases),
            "gating_cases": sum(1 for c in self.cases if c.gating),
            "by_category": dict(Counter(c.category for c in self.cases)),
            "by_metric": dict(Counter(c.metric for c in self.cases)),
            "config_keys": sorted({c.config_key for c in self.cases}),
        }
