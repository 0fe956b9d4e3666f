#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Watermark data poisoning and gradient poisoning attacks
"""

import logging
import math
from dataclasses import replace
from typing import Optional, Sequence, Tuple

import numpy as np

from .dataset import Partition, SampleSet
from .errors import CapabilityError, InputError
from .models import IMAGE_SIDE, Architecture, EvalMode, GradientPoisonSpec, PartitionKind, WatermarkSpec
from .nn import GradientTap

logger = logging.getLogger(__name__)


def watermark_rows(features: np.ndarray, rows: Sequence[int], spec: WatermarkSpec) -> np.ndarray:
    """Paint two white strips at the start and end of each targeted row.

    `features` is one sample or a (n, width) batch whose width is a whole
    number of 28-pixel rows (784 for a full image, 112 for a 4-row slice).
    Row indices are relative to that layout. Returns a new array.
    """
    marked = np.array(features, dtype=np.float64, copy=True)
    width = marked.shape[-1]
    if width % IMAGE_SIDE != 0:
        raise InputError("feature width is not a whole number of rows", width=width)
    n_rows = width // IMAGE_SIDE

    bad = [r for r in rows if not 0 <= r < n_rows]
    if bad:
        raise InputError("row index out of range", rows=bad, n_rows=n_rows)

    grid = marked.reshape(marked.shape[:-1] + (n_rows, IMAGE_SIDE))
    tail = spec.strip_len + spec.gap_len
    for r in rows:
        grid[..., r, : spec.strip_len] = spec.intensity
        grid[..., r, tail:] = spec.intensity
    return grid.reshape(marked.shape)


def watermark_adversary(spec: WatermarkSpec, architecture: Architecture, active_id: int) -> int:
    """Participant that poisons; in VFL only the active party can relabel"""
    if not architecture.is_vertical:
        return 0 if spec.adversary_id is None else spec.adversary_id
    adversary = active_id if spec.adversary_id is None else spec.adversary_id
    if adversary != active_id:
        raise CapabilityError(
            "in vertical federations the watermark adversary must be the active party",
            adversary_id=adversary, active_id=active_id,
        )
    return adversary


def poison_training_set(
    partition: Partition,
    spec: WatermarkSpec,
    rng_seed: int,
) -> Tuple[Partition, np.ndarray]:
    """Watermark and relabel floor(fraction * n) randomly chosen samples.

    Returns the poisoned partition and the sorted positions that were poisoned.
    """
    if not partition.has_labels:
        raise CapabilityError(
            "adversary holds no labels and cannot bind a watermark to a target",
            participant_id=partition.participant_id,
        )

    n = len(partition)
    n_poison = math.floor(spec.poison_fraction * n + 1e-9)
    if n_poison == 0:
        return partition, np.zeros(0, dtype=np.int64)

    rng = np.random.default_rng(rng_seed)
    poisoned = np.sort(rng.choice(n, size=n_poison, replace=False))

    if partition.kind is PartitionKind.vertical:
        rows = range(len(partition.owned_rows))
    else:
        rows = spec.horizontal_rows

    features = partition.features.copy()
    features[poisoned] = watermark_rows(features[poisoned], rows, spec)
    labels = partition.labels.copy()
    labels[poisoned] = spec.target_label

    logger.info(
        "participant %d poisoned %d/%d samples toward label %d",
        partition.participant_id, n_poison, n, spec.target_label,
    )
    return replace(partition, features=features, labels=labels), poisoned


def watermark_test_set(
    samples: SampleSet,
    spec: WatermarkSpec,
    mode: EvalMode,
    rows: Optional[Sequence[int]] = None,
) -> SampleSet:
    """Marked mode stamps every test image (labels untouched); unmarked is identity"""
    if mode is EvalMode.unmarked:
        return samples
    rows = spec.horizontal_rows if rows is None else rows
    return samples.with_features(watermark_rows(samples.features, rows, spec))


def make_gradient_tap(
    spec: GradientPoisonSpec,
    architecture: Architecture = Architecture.horichain,
    active_id: Optional[int] = None,
) -> GradientTap:
    """Tap bound to the adversary.

    HoriChain applies it to whole-model updates during the adversary's turns;
    the vertical protocols apply it to the adversary's own component on every
    sample.
    """
    if architecture.is_vertical and spec.adversary_id == active_id:
        raise CapabilityError(
            "the active party cannot be the gradient adversary",
            adversary_id=spec.adversary_id,
        )
    return GradientTap(multiplier=spec.multiplier, target=spec.adversary_id)
