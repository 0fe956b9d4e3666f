#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Experiment service layer: config parsing, one train+evaluate run, report I/O
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import matplotlib
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import yaml
from matplotlib import image as mpimg
from pydantic import ValidationError

from .adversary import make_gradient_tap, poison_training_set, watermark_adversary, watermark_test_set
from .dataset import DatasetBundle, owned_rows, partition_horizontal, partition_vertical
from .errors import (
    ConfigurationError, DataFormatError, InputError, ReportIOError, error_for_category,
)
from .federation import (
    ChainOrder, Participant, TraceLog, build_horichain, build_vertichain, build_verticomb,
    component_seed, federated_predict_proba, horichain_train, split_inputs, vertichain_train, verticomb_train,
)
from .metrics import accuracy, client_importance, metrics_record, predict_labels
from .models import (
    IMAGE_SIDE, N_CLASSES, Architecture, EpochMetrics, EvalMode, ExperimentConfig, ExperimentReport,
    GradientPoisonSpec, ImportanceProfile, RunResult, WatermarkSpec,
)
from .nn import save_checkpoint

matplotlib.use("Agg")
logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.json"
TIMINGS_FILE = "timings.json"
IMPORTANCE_CHART = "importance.png"
CELL_PIXELS = 16


# =============================================================================
# CONFIG
# =============================================================================

def _key_path(loc) -> str:
    return ".".join(str(part) for part in loc) or "<root>"


def parse_config(data: Union[bytes, str]) -> ExperimentConfig:
    """YAML config bytes to a validated ExperimentConfig with defaults filled"""
    try:
        raw = yaml.safe_load(data)
    except yaml.YAMLError as e:
        raise ConfigurationError(f"config is not valid YAML: {e}")
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a mapping at the top level")

    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        problems = [f"{_key_path(err['loc'])}: {err['msg']}" for err in e.errors()]
        raise ConfigurationError("invalid config; " + "; ".join(problems), keys=[p.split(":")[0] for p in problems])


def load_config(path: Path) -> ExperimentConfig:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise ConfigurationError(f"cannot read config file: {e}", path=str(path))
    return parse_config(data)


def default_chain_order(config: ExperimentConfig) -> ChainOrder:
    """Configured order, else ascending ids (VertiChain moves the active party last)"""
    if config.chain_order is not None:
        return ChainOrder(list(config.chain_order))
    ids = list(range(config.n_participants))
    if config.architecture is Architecture.vertichain:
        ids.remove(config.active_id)
        ids.append(config.active_id)
    return ChainOrder(ids)


# =============================================================================
# ONE RUN
# =============================================================================

def _adversary_in_range(config: ExperimentConfig, adversary_id: int):
    if not 0 <= adversary_id < config.n_participants:
        raise ConfigurationError("adversary_id outside the federation", adversary_id=adversary_id)


def _build(config: ExperimentConfig, bundle: DatasetBundle, seed: int):
    """Partitions, attack wiring and fresh participants for one run"""
    arch = config.architecture
    n = config.n_participants
    order = default_chain_order(config)

    if arch.is_vertical:
        partitions = partition_vertical(bundle, n, config.active_id)
    else:
        partitions = partition_horizontal(bundle, n, seed)

    taps = []
    attack = config.attack
    if isinstance(attack, WatermarkSpec):
        adversary = watermark_adversary(attack, arch, config.active_id)
        _adversary_in_range(config, adversary)
        partitions[adversary], poisoned = poison_training_set(
            partitions[adversary], attack, component_seed(seed, adversary),
        )
        logger.info("run seed %d: %d poisoned samples at participant %d", seed, len(poisoned), adversary)
    elif isinstance(attack, GradientPoisonSpec):
        _adversary_in_range(config, attack.adversary_id)
        taps.append(make_gradient_tap(attack, arch, config.active_id))

    net = config.network
    if arch is Architecture.horichain:
        participants = build_horichain(partitions, net.horichain_hidden, seed, taps)
    elif arch is Architecture.vertichain:
        participants = build_vertichain(partitions, order, config.active_id, net.chain_hidden, seed, taps)
    else:
        participants = build_verticomb(
            partitions, config.active_id, net.passive_width, net.passive_activation,
            net.head_hidden, seed, taps,
        )
    return participants, order


def _training_view(architecture: Architecture, participants: List[Participant]):
    """Inputs and labels of the training data as the federation holds it"""
    if architecture is Architecture.horichain:
        features = np.concatenate([p.partition.features for p in participants])
        labels = np.concatenate([p.partition.labels for p in participants])
        return features, labels
    active = next(p for p in participants if p.is_active)
    return [p.partition.features for p in participants], active.partition.labels



def _epoch_hook(config: ExperimentConfig, participants: List[Participant], order: ChainOrder, bundle: DatasetBundle):
    arch = config.architecture
    train_inputs, train_labels = _training_view(arch, participants)
    test_inputs = split_inputs(arch, bundle.test.features, config.n_participants)

    def hook(epoch: int, mean_loss: float) -> EpochMetrics:
        train_pred = np.argmax(federated_predict_proba(arch, participants, train_inputs, order), axis=1)
        test_pred = np.argmax(federated_predict_proba(arch, participants, test_inputs, order), axis=1)
        metrics = EpochMetrics(
            epoch=epoch,
            train_accuracy=accuracy(train_pred, train_labels),
            test_accuracy=accuracy(test_pred, bundle.test.labels),
            mean_loss=mean_loss,
        )
        logger.info(
            "epoch %d: loss %.4f train %.4f test %.4f",
            epoch, mean_loss, metrics.train_accuracy, metrics.test_accuracy,
        )
        return metrics

    return hook


def _train(config: ExperimentConfig, participants: List[Participant], order: ChainOrder, seed: int, trace: TraceLog, hook):
    schedule = config.schedule.model_copy(update={"rng_seed": seed})
    arch = config.architecture
    if arch is Architecture.horichain:
        return horichain_train(participants, order, schedule, trace, hook)
    if arch is Architecture.vertichain:
        return vertichain_train(participants, order, schedule, trace, hook)
    return verticomb_train(participants, config.active_id, schedule, trace, hook)


def _eval_modes(config: ExperimentConfig) -> List[EvalMode]:
    if isinstance(config.attack, WatermarkSpec):
        return [EvalMode.unmarked, EvalMode.watermarked]
    return [EvalMode.unmarked]


def _marked_rows(config: ExperimentConfig) -> List[int]:
    """Image rows the test-time watermark goes on"""
    spec = config.attack
    if not config.architecture.is_vertical:
        return list(spec.horizontal_rows)
    adversary = watermark_adversary(spec, config.architecture, config.active_id)
    return list(owned_rows(adversary, config.n_participants))


def _save_components(participants: List[Participant], architecture: Architecture, directory: Path):
    try:
        directory.mkdir(parents=True, exist_ok=True)
        if architecture is Architecture.horichain:
            save_checkpoint(participants[0].component, directory / "model.npz")
            return
        for p in participants:
            save_checkpoint(p.component, directory / f"participant_{p.participant_id}.npz")
            if p.head is not None:
                save_checkpoint(p.head, directory / "head.npz")
    except OSError as e:
        raise ReportIOError(f"cannot write checkpoints: {e}", directory=str(directory))


def run_once(
    config: ExperimentConfig,
    bundle: DatasetBundle,
    run_index: int,
    seed: int,
    checkpoint_dir: Optional[Path] = None,
) -> RunResult:
    """Build, train and evaluate one federation"""
    arch = config.architecture
    participants, order = _build(config, bundle, seed)
    trace = TraceLog()
    hook = _epoch_hook(config, participants, order, bundle)
    result = _train(config, participants, order, seed, trace, hook)

    records = {}
    for mode in _eval_modes(config):
        if mode is EvalMode.watermarked:
            test = watermark_test_set(bundle.test, config.attack, mode, _marked_rows(config))
            target = config.attack.target_label
        else:
            test, target = bundle.test, None
        predictions = predict_labels(arch, participants, test.features, order)
        key = config.config_key(mode)
        records[key] = metrics_record(predictions, test.labels, mode, seed, key, target)
        logger.info("run %d (seed %d) %s accuracy %.4f", run_index, seed, key, records[key].accuracy)

    importance = None
    if config.importance_enabled:
        if IMAGE_SIDE % config.n_participants != 0:
            logger.warning("importance skipped: %d participants do not split %d rows",
                           config.n_participants, IMAGE_SIDE)
        else:
            seeds = [seed + k for k in range(config.importance.noise_seeds)]
            importance = client_importance(arch, participants, bundle.test, seeds, order)

    if checkpoint_dir is not None:
        _save_components(participants, arch, Path(checkpoint_dir) / f"run_{run_index}")

    return RunResult(
        run_index=run_index,
        seed=seed,
        history=result.history,
        records=records,
        importance=importance,
        trace_summary=trace.summary(),
    )


# =============================================================================
# EXPERIMENT
# =============================================================================

def run_experiment(config: ExperimentConfig, checkpoint_dir: Optional[Path] = None) -> ExperimentReport:
    """Run the configured experiment through the LangGraph pipeline"""
    from .graph import GRAPH
    from .graph_state import ExperimentState

    if checkpoint_dir is None and config.save_checkpoints:
        checkpoint_dir = (config.output_dir or Path(".")) / "checkpoints"

    state = ExperimentState(config=config, checkpoint_dir=checkpoint_dir)
    final_state = ExperimentState(**GRAPH.invoke(state))
    if final_state.has_error():
        raise error_for_category(final_state.error, final_state.error_message)

    return ExperimentReport(
        config=config,
        runs=final_state.runs,
        averaged=final_state.averaged,
        importance=final_state.importance,
        processing_steps=final_state.processing_steps,
        timings=final_state.timings,
    )


# =============================================================================
# REPORTS
# =============================================================================

def summary_table(report: ExperimentReport) -> pd.DataFrame:
    """One row per averaged (config, eval mode) cell"""
    rows = []
    for key, cell in sorted(report.averaged.items()):
        success = cell.attack_success_rate
        rows.append({
            "config_key": key,
            "eval_mode": cell.eval_mode.value,
            "n_runs": cell.n_runs,
            "accuracy_mean": cell.accuracy.mean,
            "accuracy_std": cell.accuracy.std,
            "macro_f1_mean": cell.macro_f1.mean,
            "macro_f1_std": cell.macro_f1.std,
            "attack_success_mean": None if success is None else success.mean,
            "attack_success_std": None if success is None else success.std,
            "representative_seed": cell.representative_seed,
        })
    return pd.DataFrame(rows)


def history_table(report: ExperimentReport) -> pd.DataFrame:
    rows = [
        {"run_index": run.run_index, "seed": run.seed, **epoch.model_dump()}
        for run in report.runs
        for epoch in run.history
    ]
    return pd.DataFrame(rows)


def importance_table(report: ExperimentReport) -> pd.DataFrame:
    profile = report.importance
    return pd.DataFrame({
        "participant_id": range(len(profile.drops)),
        "noised_accuracy": profile.noised_accuracy,
        "drop": profile.drops,
        "share": profile.shares if profile.shares is not None else [None] * len(profile.drops),
    })


def render_confusion(matrix) -> Tuple[np.ndarray, str]:
    """Grayscale image (dark = frequent, row-normalized) and an aligned count table"""
    counts = np.asarray(matrix, dtype=np.int64)
    if counts.shape != (N_CLASSES, N_CLASSES) or np.any(counts < 0):
        raise InputError("confusion matrix must be 10x10 non-negative counts", shape=counts.shape)

    totals = counts.sum(axis=1, keepdims=True)
    frequency = np.divide(counts, totals, out=np.zeros(counts.shape), where=totals > 0)
    shade = np.round(255.0 * (1.0 - frequency)).astype(np.uint8)
    image = shade.repeat(CELL_PIXELS, axis=0).repeat(CELL_PIXELS, axis=1)

    table = pd.DataFrame(
        counts,
        index=pd.Index(range(N_CLASSES), name="true"),
        columns=pd.Index(range(N_CLASSES), name="pred"),
    ).to_string()
    return image, table + "\n"


def write_confusion(matrix, directory: Path, stem: str) -> List[Path]:
    image, table = render_confusion(matrix)
    png, txt = directory / f"{stem}.png", directory / f"{stem}.txt"
    mpimg.imsave(png, image, cmap="gray", vmin=0, vmax=255, format="png")
    txt.write_text(table, encoding="utf-8")
    return [png, txt]


def write_importance_chart(profile: ImportanceProfile, directory: Path) -> Path:
    """Bar chart of per-participant importance; raw drops when the shares are degenerate"""
    values = profile.shares if profile.shares is not None else profile.drops
    label = "share of total accuracy drop" if profile.shares is not None else "accuracy drop (degenerate)"
    fig, ax = plt.subplots(figsize=(6, 4))
    try:
        ax.bar(range(len(values)), values, color="#4c72b0")
        ax.axhline(0.0, color="black", linewidth=0.8)
        ax.set_xticks(range(len(values)))
        ax.set_xlabel("participant")
        ax.set_ylabel(label)
        ax.set_title(f"client importance (baseline accuracy {profile.baseline_accuracy:.3f})")
        path = directory / IMPORTANCE_CHART
        fig.savefig(path, dpi=100, bbox_inches="tight")
    finally:
        plt.close(fig)
    return path


def emit_report(report: ExperimentReport, directory: Path) -> List[Path]:
    """Write metrics, timings, tables, the reference comparison and the PNG renderings.

    metrics.json holds everything except timings and is byte-stable for a
    given config; timings go to timings.json.
    """
    from evaluation.comparison import compare_reports

    directory = Path(directory)
    written: List[Path] = []
    try:
        directory.mkdir(parents=True, exist_ok=True)

        metrics_path = directory / METRICS_FILE
        metrics_path.write_text(report.model_dump_json(indent=2, exclude={"timings"}) + "\n", encoding="utf-8")
        timings_path = directory / TIMINGS_FILE
        timings_path.write_text(json.dumps(report.timings, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written += [metrics_path, timings_path]

        tables: Dict[str, pd.DataFrame] = {
            "summary.csv": summary_table(report),
            "history.csv": history_table(report),
            "comparison.csv": compare_reports([report]),
        }
        if report.importance is not None:
            tables["importance.csv"] = importance_table(report)
        for name, frame in tables.items():
            path = directory / name
            frame.to_csv(path, index=False, float_format="%.6f")
            written.append(path)

        for _, cell in sorted(report.averaged.items()):
            written += write_confusion(cell.representative_confusion, directory, f"confusion_{cell.eval_mode.value}")
        if report.importance is not None:
            written.append(write_importance_chart(report.importance, directory))
    except OSError as e:
        raise ReportIOError(f"cannot write report: {e}", directory=str(directory))

    logger.info("report written to %s (%d files)", directory, len(written))
    return written


def load_report(directory: Path) -> ExperimentReport:
    """Parse an emitted report directory back into an ExperimentReport"""
    directory = Path(directory)
    try:
        text = (directory / METRICS_FILE).read_text(encoding="utf-8")
        timings_path = directory / TIMINGS_FILE
        timings = json.loads(timings_path.read_text(encoding="utf-8")) if timings_path.exists() else {}
    except OSError as e:
        raise ReportIOError(f"cannot read report: {e}", directory=str(directory))
    except json.JSONDecodeError as e:
        raise DataFormatError(f"timings file is not valid JSON: {e}", directory=str(directory))

    try:
        report = ExperimentReport.model_validate_json(text)
    except ValidationError as e:
        raise DataFormatError(f"metrics file does not match the report schema: {e.error_count()} problems",
                              directory=str(directory))
    return report.model_copy(update={"timings": timings})
