#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Accuracy, macro-F1, confusion matrices, client importance and run averaging
"""

import logging
from typing import List, Optional, Sequence

import numpy as np
from sklearn.metrics import accuracy_score, confusion_matrix, f1_score

from .dataset import SampleSet, make_noise_features, owned_rows, row_columns
from .errors import InputError
from .federation import ChainOrder, Participant, component_seed, federated_predict_proba, noised_inputs, split_inputs
from .models import (
    N_CLASSES, Architecture, AveragedMetric, AveragedMetrics, EvalMode, ImportanceProfile, MetricsRecord,
)

logger = logging.getLogger(__name__)


def _as_pair(predictions, labels):
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise InputError("predictions and labels differ in length",
                         predictions=predictions.shape, labels=labels.shape)
    if predictions.size == 0:
        raise InputError("cannot score an empty evaluation")
    return predictions, labels


def accuracy(predictions, labels) -> float:
    predictions, labels = _as_pair(predictions, labels)
    return float(accuracy_score(labels, predictions))


def macro_f1(predictions, labels) -> float:
    """Unweighted mean of per-class F1 over the classes present in `labels`"""
    predictions, labels = _as_pair(predictions, labels)
    return float(f1_score(labels, predictions, labels=np.unique(labels), average="macro", zero_division=0))


def confusion(predictions, labels) -> np.ndarray:
    """10x10 counts; entry (t, p) counts samples of true class t predicted as p"""
    predictions, labels = _as_pair(predictions, labels)
    for name, values in (("prediction", predictions), ("label", labels)):
        if values.min() < 0 or values.max() >= N_CLASSES:
            raise InputError(f"{name} class outside 0..{N_CLASSES - 1}")
    return confusion_matrix(labels, predictions, labels=np.arange(N_CLASSES))


def attack_success_rate(predictions, labels, target_label: int) -> float:
    """Share of samples whose true class is not the target that get predicted as the target"""
    predictions, labels = _as_pair(predictions, labels)
    eligible = labels != target_label
    if not np.any(eligible):
        return 0.0
    return float(np.mean(predictions[eligible] == target_label))


def metrics_record(
    predictions,
    labels,
    eval_mode: EvalMode,
    run_seed: int,
    config_key: str,
    target_label: Optional[int] = None,
) -> MetricsRecord:
    matrix = confusion(predictions, labels)
    return MetricsRecord(
        accuracy=accuracy(predictions, labels),
        macro_f1=macro_f1(predictions, labels),
        confusion=matrix.tolist(),
        eval_mode=eval_mode,
        run_seed=run_seed,
        config_key=config_key,
        attack_success_rate=None if target_label is None else attack_success_rate(predictions, labels, target_label),
    )


def predict_labels(
    architecture: Architecture,
    participants: Sequence[Participant],
    features: np.ndarray,
    order: Optional[ChainOrder] = None,
) -> np.ndarray:
    inputs = split_inputs(architecture, features, len(participants))
    return np.argmax(federated_predict_proba(architecture, participants, inputs, order), axis=1)


# =============================================================================
# CLIENT IMPORTANCE
# =============================================================================

def _normalize(drops: List[float], baseline: float, noised: List[float], seeds: List[int]) -> ImportanceProfile:
    total = float(np.sum(drops))
    if total <= 0.0:
        logger.warning("degenerate importance profile: accuracy drops sum to %.4f", total)
        return ImportanceProfile(
            baseline_accuracy=baseline, noised_accuracy=noised, drops=drops,
            degenerate=True, noise_seeds=seeds,
        )
    return ImportanceProfile(
        baseline_accuracy=baseline, noised_accuracy=noised, drops=drops,
        shares=[d / total for d in drops], noise_seeds=seeds,
    )


def client_importance(
    architecture: Architecture,
    participants: Sequence[Participant],
    test: SampleSet,
    noise_seeds: Sequence[int],
    order: Optional[ChainOrder] = None,
    noised_clients: Optional[Sequence[int]] = None,
) -> ImportanceProfile:
    """Accuracy drop when one participant's evaluation inputs are replaced by noise.

    Each drop is averaged over `noise_seeds`. Participants left out of
    `noised_clients` keep a zero drop.
    """
    if len(test) == 0:
        raise InputError("importance needs a non-empty test set")
    n_participants = len(participants)
    noised_clients = range(n_participants) if noised_clients is None else noised_clients

    baseline = accuracy(predict_labels(architecture, participants, test.features, order), test.labels)
    noised_accuracy = [baseline] * n_participants
    for pid in noised_clients:
        # HoriChain noises the row group a vertical participant with this id would own
        width = len(row_columns(owned_rows(pid, n_participants)))
        scores = []
        for seed in noise_seeds:
            noise = make_noise_features(len(test) * width, component_seed(seed, pid)).reshape(len(test), width)
            inputs = noised_inputs(architecture, test.features, n_participants, pid, noise)
            probs = federated_predict_proba(architecture, participants, inputs, order)
            scores.append(accuracy(np.argmax(probs, axis=1), test.labels))
        noised_accuracy[pid] = float(np.mean(scores))

    drops = [baseline - a for a in noised_accuracy]
    return _normalize(drops, baseline, noised_accuracy, list(noise_seeds))


def average_importance(profiles: Sequence[ImportanceProfile]) -> ImportanceProfile:
    """Mean drops across runs, re-normalized"""
    if not profiles:
        raise InputError("no importance profiles to average")
    drops = np.mean([p.drops for p in profiles], axis=0).tolist()
    noised = np.mean([p.noised_accuracy for p in profiles], axis=0).tolist()
    baseline = float(np.mean([p.baseline_accuracy for p in profiles]))
    return _normalize(drops, baseline, noised, list(profiles[0].noise_seeds))


# =============================================================================
# RUN AVERAGING
# =============================================================================

def _mean_std(values: Sequence[float]) -> AveragedMetric:
    values = np.asarray(values, dtype=np.float64)
    std = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return AveragedMetric(mean=float(np.mean(values)), std=std)


def average_runs(records: Sequence[MetricsRecord], min_runs: int = 2) -> AveragedMetrics:
    """Mean ± sample std per metric; the confusion matrix comes from the run
    whose accuracy is nearest the mean (first one on ties)."""
    if len(records) < min_runs:
        raise InputError(f"averaging needs at least {min_runs} records", got=len(records))
    keys = {r.config_key for r in records}
    if len(keys) != 1:
        raise InputError("records from different configurations in one group", keys=sorted(keys))

    acc = _mean_std([r.accuracy for r in records])
    distances = [abs(r.accuracy - acc.mean) for r in records]
    representative = records[int(np.argmin(distances))]

    success = None
    if all(r.attack_success_rate is not None for r in records):
        success = _mean_std([r.attack_success_rate for r in records])

    return AveragedMetrics(
        config_key=records[0].config_key,
        eval_mode=records[0].eval_mode,
        n_runs=len(records),
        accuracy=acc,
        macro_f1=_mean_std([r.macro_f1 for r in records]),
        attack_success_rate=success,
        representative_seed=representative.run_seed,
        representative_confusion=representative.confusion,
    )
