#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Reference tables and report comparison
"""

import pytest

from app.models import (
    AveragedMetric, AveragedMetrics, DataSource, EpochMetrics, EvalMode, ExperimentConfig, ExperimentReport,
    ImportanceProfile, RunResult,
)
from evaluation.comparison import compare_reports, failed_checks
from evaluation.reference_tables import ReferenceTables


def cell(key: str, acc: float) -> AveragedMetrics:
    return AveragedMetrics(
        config_key=key,
        eval_mode=EvalMode(key.split("/")[-1]),
        n_runs=3,
        accuracy=AveragedMetric(mean=acc, std=0.01),
        macro_f1=AveragedMetric(mean=acc, std=0.01),
        representative_seed=0,
        representative_confusion=[[0] * 10 for _ in range(10)],
    )


def report(arch: str, cells: dict, attack=None, subsample=1.0, runs=None, importance=None) -> ExperimentReport:
    config = ExperimentConfig(
        architecture=arch,
        data=DataSource(csv_path="mnist_train.csv"),
        subsample_fraction=subsample,
        **({"attack": attack} if attack else {}),
    )
    return ExperimentReport(
        config=config,
        runs=runs or [],
        averaged={k: cell(k, v) for k, v in cells.items()},
        importance=importance,
    )


def rows_for(frame, key, check="band", metric="accuracy"):
    return frame[(frame["config_key"] == key) & (frame["check"] == check) & (frame["metric"] == metric)]


class TestReferenceTables:
    def test_grid_is_complete(self):
        keys = set(ReferenceTables().get_statistics()["config_keys"])
        for fraction in ("0", "0.25", "0.1", "0.01", "0.005"):
            for arch in ("horichain", "verticomb"):
                assert f"{arch}/watermark:{fraction}/watermarked" in keys
                assert f"{arch}/watermark:{fraction}/unmarked" in keys
        for multiplier in ("-1", "-10", "0"):
            assert f"verticomb/gradient:{multiplier}/unmarked" in keys
        assert {"horichain/none/unmarked", "vertichain/none/unmarked", "verticomb/none/unmarked"} <= keys

    def test_bands_contain_expected(self):
        for case in ReferenceTables().get_all_cases():
            if case.gating and case.config_key != "horichain/watermark:0.005/watermarked":
                assert case.lower <= case.expected <= case.upper


class TestCompare:
    def test_in_band_passes(self):
        frame = compare_reports([report("horichain", {"horichain/none/unmarked": 0.96})])
        assert bool(rows_for(frame, "horichain/none/unmarked")["passed"].iloc[0])
        assert failed_checks(frame).empty

    def test_off_band_fails(self):
        frame = compare_reports([report("horichain", {"horichain/none/unmarked": 0.70})])
        assert not bool(rows_for(frame, "horichain/none/unmarked")["passed"].iloc[0])
        assert len(failed_checks(frame)) == 1

    def test_desk_scale_widens_bands(self):
        full = compare_reports([report("horichain", {"horichain/none/unmarked": 0.85})])
        desk = compare_reports([report("horichain", {"horichain/none/unmarked": 0.85}, subsample=0.25)])
        assert not bool(rows_for(full, "horichain/none/unmarked")["passed"].iloc[0])
        row = rows_for(desk, "horichain/none/unmarked").iloc[0]
        assert bool(row["passed"])
        assert row["lower"] == pytest.approx(0.962 - 0.05 - 0.10)

    def test_marked_collapse(self):
        attack = {"kind": "watermark", "poison_fraction": 0.25}
        frame = compare_reports([report("verticomb", {
            "verticomb/watermark:0.25/watermarked": 0.01,
            "verticomb/watermark:0.25/unmarked": 0.93,
        }, attack=attack)])
        assert failed_checks(frame).empty
        assert len(rows_for(frame, "verticomb/watermark:0.25/watermarked")) == 1

    def test_clean_model_on_marked_samples(self):
        attack = {"kind": "watermark", "poison_fraction": 0.0}
        frame = compare_reports([report("horichain", {
            "horichain/watermark:0/watermarked": 0.30,
            "horichain/watermark:0/unmarked": 0.95,
        }, attack=attack)])
        marked = rows_for(frame, "horichain/watermark:0/watermarked").iloc[0]
        assert marked["expected"] == pytest.approx(0.772)
        assert not bool(marked["passed"]) and not bool(marked["gating"])
        assert not rows_for(frame, "horichain/watermark:0/watermarked", metric="macro_f1")["gating"].any()
        assert bool(rows_for(frame, "horichain/watermark:0/unmarked")["gating"].iloc[0])
        assert failed_checks(frame).empty

    def test_clean_model_losing_accuracy_fails(self):
        attack = {"kind": "watermark", "poison_fraction": 0.0}
        frame = compare_reports([report("verticomb", {
            "verticomb/watermark:0/watermarked": 0.89,
            "verticomb/watermark:0/unmarked": 0.80,
        }, attack=attack)])
        assert list(failed_checks(frame)["config_key"]) == ["verticomb/watermark:0/unmarked"]

    def test_ordering_check(self):
        reports = [
            report("horichain", {"horichain/none/unmarked": 0.96}),
            report("vertichain", {"vertichain/none/unmarked": 0.97}),
            report("verticomb", {"verticomb/none/unmarked": 0.95}),
        ]
        frame = compare_reports(reports)
        ordering = frame[frame["check"] == "ordering"]
        assert len(ordering) == 1 and not bool(ordering["passed"].iloc[0])

    def test_delayed_learning_check(self):
        attack = {"kind": "gradient", "multiplier": 0.0}
        frame = compare_reports([
            report("horichain", {"horichain/none/unmarked": 0.96}),
            report("horichain", {"horichain/gradient:0/unmarked": 0.95}, attack=attack),
        ])
        row = frame[frame["check"] == "below_baseline"].iloc[0]
        assert bool(row["passed"])

    def test_trajectory_check(self):
        history = [EpochMetrics(epoch=e, test_accuracy=a, mean_loss=1.0) for e, a in ((1, 0.6), (2, 0.4), (3, 0.2))]
        runs = [RunResult(run_index=0, seed=0, history=history)]
        attack = {"kind": "gradient", "multiplier": -1.0}
        frame = compare_reports([report("verticomb", {"verticomb/gradient:-1/unmarked": 0.2}, attack=attack, runs=runs)])
        row = frame[frame["check"] == "trajectory"].iloc[0]
        assert bool(row["passed"]) and row["observed"] == pytest.approx(0.2)

    def test_importance_checks(self):
        even = ImportanceProfile(baseline_accuracy=0.9, noised_accuracy=[0.8] * 7, drops=[0.1] * 7, shares=[1 / 7] * 7)
        skewed_shares = [0.05] * 6 + [0.7]
        skewed = ImportanceProfile(baseline_accuracy=0.9, noised_accuracy=[0.8] * 7, drops=skewed_shares,
                                   shares=skewed_shares)
        frame = compare_reports([
            report("horichain", {"horichain/none/unmarked": 0.96}, importance=even),
            report("vertichain", {"vertichain/none/unmarked": 0.88}, importance=skewed),
        ])
        assert bool(frame[frame["check"] == "importance_equal"]["passed"].iloc[0])
        assert bool(frame[frame["check"] == "importance_last_client"]["passed"].iloc[0])

    def test_unknown_cells_are_ignored(self):
        frame = compare_reports([report("horichain", {"horichain/watermark:0.3/unmarked": 0.9},
                                        attack={"kind": "watermark", "poison_fraction": 0.3})])
        assert frame.empty


def test_grid_covers_reference_cells():
    from evaluation.run_evaluation import grid_configs

    base = ExperimentConfig(architecture="horichain", data=DataSource(csv_path="mnist_train.csv"))
    cells = grid_configs(base)
    assert len(cells) == 19
    assert len({name for name, _ in cells}) == 19
    keys = {config.config_key(EvalMode.unmarked) for _, config in cells}
    assert "verticomb/gradient:-10/unmarked" in keys
    assert "horichain/watermark:0.005/unmarked" in keys
    assert {"horichain/watermark:0/unmarked", "verticomb/watermark:0/unmarked"} <= keys
    assert all(config.data == base.data for _, config in cells)
