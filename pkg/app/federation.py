#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Participants and the three decentralized training protocols.

HoriChain   one model travels along the chain; each holder trains a few
            samples of its shard and hands the weights on.
VertiChain  activations cascade along the chain; the active party (last)
            owns the labels and starts backpropagation.
VertiComb   every participant owns one first-layer component; the active
            party also owns the head that consumes their concatenated outputs.

Messages are in-process value passing, recorded in a TraceLog.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .dataset import Partition, owned_rows, row_columns, slice_vertical
from .errors import ConfigurationError, ProtocolError
from .models import N_CLASSES, Activation, Architecture, EpochMetrics, PartitionKind, TraceRecord, TrainingSchedule
from .nn import GradientSet, GradientTap, Mlp, apply_sgd, backward, forward, forward_batch, init_mlp, loss_softmax_ce

logger = logging.getLogger(__name__)

EpochHook = Callable[[int, float], EpochMetrics]


@dataclass
class Participant:
    participant_id: int
    partition: Partition
    component: Mlp
    is_active: bool = False
    tap: Optional[GradientTap] = None
    head: Optional[Mlp] = None  # VertiComb active party only


@dataclass
class ChainOrder:
    ids: List[int]

    def validate(self, participants: Sequence[Participant], active_last: bool = False) -> "ChainOrder":
        if sorted(self.ids) != [p.participant_id for p in participants]:
            raise ProtocolError("chain order is not a permutation of all participants", order=self.ids)
        if active_last and not participants[self.ids[-1]].is_active:
            raise ProtocolError("the active participant must be last in the chain", order=self.ids)
        return self


class TraceLog:
    """Append-only message log; keeps full records only when asked to"""

    def __init__(self, keep_records: bool = False):
        self.keep_records = keep_records
        self.records: List[TraceRecord] = []
        self.counts: Counter = Counter()
        self.step = 0

    def record(self, sender: Union[int, str], receiver: Union[int, str], payload_kind: str, shape: Tuple[int, ...]):
        self.counts[f"{payload_kind}:{'x'.join(str(s) for s in shape)}"] += 1
        if self.keep_records:
            self.records.append(TraceRecord(
                step=self.step, sender=sender, receiver=receiver,
                payload_kind=payload_kind, shape=list(shape),
            ))
        self.step += 1

    def summary(self) -> Dict[str, int]:
        return dict(sorted(self.counts.items()))

    def payload_widths(self, payload_kind: str) -> set:
        return {r.shape[-1] for r in self.records if r.payload_kind == payload_kind}


@dataclass
class TrainingResult:
    participants: List[Participant]
    history: List[EpochMetrics] = field(default_factory=list)
    model: Optional[Mlp] = None  # HoriChain's circulating model


def component_seed(seed: int, participant_id: int) -> int:
    return int(np.random.SeedSequence([seed, participant_id]).generate_state(1)[0])


def _check_ids(participants: Sequence[Participant]):
    for k, participant in enumerate(participants):
        if participant.participant_id != k:
            raise ProtocolError("participants must be listed by id", position=k, id=participant.participant_id)


def _active(participants: Sequence[Participant]) -> Participant:
    active = [p for p in participants if p.is_active]
    if len(active) != 1:
        raise ProtocolError("a vertical federation needs exactly one active participant", active=len(active))
    return active[0]


def _tap_for(taps: Sequence[GradientTap], participant_id: int) -> Optional[GradientTap]:
    """First tap scoped to this participant; at most one adversary per run"""
    return next((t for t in taps if t.applies_to(participant_id)), None)


def _epoch_metrics(hook: Optional[EpochHook], epoch: int, losses: List[float]) -> EpochMetrics:
    mean_loss = float(np.mean(losses)) if losses else 0.0
    if hook is None:
        return EpochMetrics(epoch=epoch, mean_loss=mean_loss)
    return hook(epoch, mean_loss)


# =============================================================================
# FEDERATION BUILDERS
# =============================================================================

def build_horichain(
    partitions: Sequence[Partition],
    hidden: Sequence[int],
    seed: int,
    taps: Sequence[GradientTap] = (),
) -> List[Participant]:
    widths = [partitions[0].feature_width, *hidden, N_CLASSES]
    activations = [Activation.relu] * len(hidden) + [Activation.softmax]
    model = init_mlp(widths, activations, seed)
    return [
        Participant(p.participant_id, p, model.copy(), tap=_tap_for(taps, p.participant_id))
        for p in partitions
    ]


def build_vertichain(
    partitions: Sequence[Partition],
    order: ChainOrder,
    active_id: int,
    hidden: int,
    seed: int,
    taps: Sequence[GradientTap] = (),
) -> List[Participant]:
    """First component 112->hidden->10; later ones take 112 + 10 inputs"""
    participants = []
    for p in partitions:
        position = order.ids.index(p.participant_id)
        in_width = p.feature_width + (0 if position == 0 else N_CLASSES)
        last = position == len(order.ids) - 1
        component = init_mlp(
            [in_width, hidden, N_CLASSES],
            [Activation.relu, Activation.softmax if last else Activation.identity],
            component_seed(seed, p.participant_id),
        )
        participants.append(Participant(
            p.participant_id, p, component,
            is_active=p.participant_id == active_id, tap=_tap_for(taps, p.participant_id),
        ))
    return participants


def build_verticomb(
    partitions: Sequence[Partition],
    active_id: int,
    passive_width: int,
    passive_activation: Activation,
    head_hidden: Sequence[int],
    seed: int,
    taps: Sequence[GradientTap] = (),
) -> List[Participant]:
    """Each participant owns in->passive_width; the active party also owns the head"""
    participants = []
    for p in partitions:
        component = init_mlp(
            [p.feature_width, passive_width], [passive_activation],
            component_seed(seed, p.participant_id),
        )
        participants.append(Participant(
            p.participant_id, p, component,
            is_active=p.participant_id == active_id, tap=_tap_for(taps, p.participant_id),
        ))

    head_widths = [passive_width * len(partitions), *head_hidden, N_CLASSES]
    participants[active_id].head = init_mlp(
        head_widths,
        [Activation.relu] * len(head_hidden) + [Activation.softmax],
        component_seed(seed, len(partitions)),
    )
    return participants


# =============================================================================
# HORICHAIN
# =============================================================================

def horichain_train(
    participants: List[Participant],
    order: ChainOrder,
    schedule: TrainingSchedule,
    trace: Optional[TraceLog] = None,
    epoch_hook: Optional[EpochHook] = None,
) -> TrainingResult:
    """Circulate one model along the chain.

    Each visit trains `rounds_per_handoff` samples (one SGD step each) from
    the holder's shard, then the weights move to the next holder. Holders
    whose shard is used up for the epoch are skipped; the epoch ends when
    every shard has been consumed once.
    """
    _check_ids(participants)
    order.validate(participants)
    trace = trace or TraceLog()

    shapes = {tuple(p.component.shapes) for p in participants}
    if len(shapes) != 1:
        raise ProtocolError("HoriChain needs width-identical components", shapes=sorted(shapes))
    for p in participants:
        if p.partition.kind is not PartitionKind.horizontal:
            raise ProtocolError("HoriChain needs horizontal shards", participant_id=p.participant_id)
        if len(p.partition) == 0:
            raise ConfigurationError("empty shard", participant_id=p.participant_id)

    model = participants[order.ids[0]].component
    n_params = model.n_parameters
    sender: Union[int, str] = "init"
    position = 0
    history = []

    for epoch in range(1, schedule.epochs + 1):
        streams = {
            p.participant_id: np.random.default_rng([schedule.rng_seed, epoch, p.participant_id]).permutation(len(p.partition))
            for p in participants
        }
        cursors = {pid: 0 for pid in streams}
        remaining = sum(len(s) for s in streams.values())
        losses: List[float] = []

        while remaining > 0:
            pid = order.ids[position]
            position = (position + 1) % len(order.ids)
            stream = streams[pid]
            if cursors[pid] >= len(stream):
                continue

            holder = participants[pid]
            holder.component = model.copy()
            trace.record(sender, pid, "weights", (n_params,))

            batch = stream[cursors[pid]: cursors[pid] + schedule.rounds_per_handoff]
            for j in batch:
                probs, cache = forward(holder.component, holder.partition.features[j])
                label = int(holder.partition.labels[j])
                losses.append(loss_softmax_ce(probs, label))
                grads, _ = backward(holder.component, cache, label=label)
                apply_sgd(holder.component, grads, schedule.learning_rate, holder.tap)

            cursors[pid] += len(batch)
            remaining -= len(batch)
            model = holder.component
            sender = pid

        logger.debug("horichain epoch %d done after %d messages", epoch, trace.step)
        # every participant holds the epoch-end model; the next visit re-copies it anyway
        for p in participants:
            p.component = model.copy()
        history.append(_epoch_metrics(epoch_hook, epoch, losses))

    return TrainingResult(participants, history, model)


# =============================================================================
# VERTICHAIN
# =============================================================================

def vertichain_step(
    participants: List[Participant],
    order: ChainOrder,
    sample_slices: Sequence[np.ndarray],
    label: Optional[int],
    learning_rate: float,
    trace: Optional[TraceLog] = None,
) -> Tuple[Dict[int, GradientSet], float]:
    """One sample through the activation cascade and back; returns grads and loss"""
    order.validate(participants, active_last=True)
    if label is None:
        raise ProtocolError("the active party needs the sample label")
    if len(sample_slices) != len(participants):
        raise ProtocolError("one feature slice per participant is required",
                            expected=len(participants), got=len(sample_slices))
    trace = trace or TraceLog()

    caches = {}
    previous_out = None
    for position, pid in enumerate(order.ids):
        participant = participants[pid]
        x = sample_slices[pid]
        if position > 0:
            x = np.concatenate([x, previous_out])
        previous_out, caches[pid] = forward(participant.component, x)
        if position < len(order.ids) - 1:
            trace.record(pid, order.ids[position + 1], "activation", previous_out.shape)

    loss = loss_softmax_ce(previous_out, label)

    grads: Dict[int, GradientSet] = {}
    upstream = None
    for position in range(len(order.ids) - 1, -1, -1):
        pid = order.ids[position]
        component = participants[pid].component
        if upstream is None:
            grads[pid], input_grad = backward(component, caches[pid], label=label)
        else:
            grads[pid], input_grad = backward(component, caches[pid], upstream_grad=upstream)
        if position > 0:
            # trailing entries belong to the predecessor's output
            upstream = input_grad[-N_CLASSES:]
            trace.record(pid, order.ids[position - 1], "gradient", upstream.shape)

    for pid, g in grads.items():
        apply_sgd(participants[pid].component, g, learning_rate, participants[pid].tap)
    return grads, loss


def _aligned_samples(participants: Sequence[Participant]) -> int:
    reference = participants[0].partition.ids
    for p in participants[1:]:
        if not np.array_equal(p.partition.ids, reference):
            raise ProtocolError("vertical partitions do not share sample ids", participant_id=p.participant_id)
    return reference.shape[0]


def vertichain_train(
    participants: List[Participant],
    order: ChainOrder,
    schedule: TrainingSchedule,
    trace: Optional[TraceLog] = None,
    epoch_hook: Optional[EpochHook] = None,
) -> TrainingResult:
    _check_ids(participants)
    active = _active(participants)
    n = _aligned_samples(participants)
    trace = trace or TraceLog()
    history = []
    for epoch in range(1, schedule.epochs + 1):
        losses = []
        for j in np.random.default_rng([schedule.rng_seed, epoch]).permutation(n):
            slices = [p.partition.features[j] for p in participants]
            _, loss = vertichain_step(
                participants, order, slices, int(active.partition.labels[j]),
                schedule.learning_rate, trace,
            )
            losses.append(loss)
        history.append(_epoch_metrics(epoch_hook, epoch, losses))
    return TrainingResult(participants, history)


# =============================================================================
# VERTICOMB
# =============================================================================

def verticomb_step(
    participants: List[Participant],
    active_id: int,
    sample_slices: Sequence[np.ndarray],
    label: Optional[int],
    learning_rate: float,
    trace: Optional[TraceLog] = None,
) -> Tuple[Dict[Union[int, str], GradientSet], float]:
    """One sample through the split network; head grads are keyed 'head'"""
    head = participants[active_id].head
    if head is None or not participants[active_id].is_active:
        raise ProtocolError("the active participant must own the head", active_id=active_id)
    if label is None:
        raise ProtocolError("the active party needs the sample label")
    if len(sample_slices) != len(participants):
        raise ProtocolError("one feature slice per participant is required",
                            expected=len(participants), got=len(sample_slices))
    trace = trace or TraceLog()

    outputs, caches = [], {}
    for p in participants:
        out, caches[p.participant_id] = forward(p.component, sample_slices[p.participant_id])
        outputs.append(out)
        if p.participant_id != active_id:
            trace.record(p.participant_id, active_id, "activation", out.shape)

    joined = np.concatenate(outputs)
    if joined.shape[0] != head.input_width:
        raise ProtocolError("concatenated width does not match the head input",
                            width=joined.shape[0], head=head.input_width)

    probs, head_cache = forward(head, joined)
    loss = loss_softmax_ce(probs, label)
    grads: Dict[Union[int, str], GradientSet] = {}
    grads["head"], joined_grad = backward(head, head_cache, label=label)

    offset = 0
    for p, out in zip(participants, outputs):
        segment = joined_grad[offset: offset + out.shape[0]]
        offset += out.shape[0]
        if p.participant_id != active_id:
            trace.record(active_id, p.participant_id, "gradient", segment.shape)
        grads[p.participant_id], _ = backward(p.component, caches[p.participant_id], upstream_grad=segment)

    apply_sgd(head, grads["head"], learning_rate, participants[active_id].tap)
    for p in participants:
        apply_sgd(p.component, grads[p.participant_id], learning_rate, p.tap)
    return grads, loss


def verticomb_train(
    participants: List[Participant],
    active_id: int,
    schedule: TrainingSchedule,
    trace: Optional[TraceLog] = None,
    epoch_hook: Optional[EpochHook] = None,
) -> TrainingResult:
    _check_ids(participants)
    active = _active(participants)
    n = _aligned_samples(participants)
    trace = trace or TraceLog()
    history = []
    for epoch in range(1, schedule.epochs + 1):
        losses = []
        for j in np.random.default_rng([schedule.rng_seed, epoch]).permutation(n):
            slices = [p.partition.features[j] for p in participants]
            _, loss = verticomb_step(
                participants, active_id, slices, int(active.partition.labels[j]),
                schedule.learning_rate, trace,
            )
            losses.append(loss)
        history.append(_epoch_metrics(epoch_hook, epoch, losses))
    return TrainingResult(participants, history)


# =============================================================================
# PREDICTION
# =============================================================================

def _vertical_inputs(participants: Sequence[Participant], inputs) -> List[np.ndarray]:
    if isinstance(inputs, dict):
        missing = [p.participant_id for p in participants if p.participant_id not in inputs]
        slices = [inputs.get(p.participant_id) for p in participants]
    else:
        slices = list(inputs)
        missing = [k for k in range(len(participants)) if k >= len(slices) or slices[k] is None]
    if missing:
        raise ProtocolError("missing feature slice", participants=missing)
    return slices


def federated_predict_proba(
    architecture: Architecture,
    participants: Sequence[Participant],
    inputs,
    order: Optional[ChainOrder] = None,
) -> np.ndarray:
    """Class probabilities for a batch.

    HoriChain takes a (n, 784) array; the vertical architectures take one
    (n, slice_width) array per participant (list indexed by id, or dict).
    """
    if architecture is Architecture.horichain:
        return forward_batch(participants[0].component, inputs)

    slices = [np.atleast_2d(s) for s in _vertical_inputs(participants, inputs)]
    if architecture is Architecture.vertichain:
        order = order or ChainOrder([p.participant_id for p in participants])
        out = None
        for position, pid in enumerate(order.ids):
            x = slices[pid] if position == 0 else np.hstack([slices[pid], out])
            out = forward_batch(participants[pid].component, x)
        return out

    active = _active(participants)
    joined = np.hstack([forward_batch(p.component, slices[p.participant_id]) for p in participants])
    if joined.shape[1] != active.head.input_width:
        raise ProtocolError("concatenated width does not match the head input",
                            width=joined.shape[1], head=active.head.input_width)
    return forward_batch(active.head, joined)


def federated_predict(
    architecture: Architecture,
    participants: Sequence[Participant],
    sample,
    order: Optional[ChainOrder] = None,
) -> Tuple[int, np.ndarray]:
    """Predicted class and probability vector for one sample (or its slices)"""
    if architecture is Architecture.horichain:
        batch = np.atleast_2d(sample)
    else:
        slices = _vertical_inputs(participants, sample)
        batch = [np.atleast_2d(s) for s in slices]
    probs = federated_predict_proba(architecture, participants, batch, order)[0]
    return int(np.argmax(probs)), probs


def split_inputs(architecture: Architecture, features: np.ndarray, n_participants: int):
    """Full (n, 784) images into the input layout the architecture predicts on"""
    if architecture is Architecture.horichain:
        return features
    return slice_vertical(features, n_participants)


def noised_inputs(
    architecture: Architecture,
    features: np.ndarray,
    n_participants: int,
    participant_id: int,
    noise: np.ndarray,
):
    """Inputs with one participant's contribution replaced by `noise` (n, slice_width).

    Vertical: the participant's slice. HoriChain: the same rotating row group
    a vertical participant with that id would own.
    """
    if architecture is Architecture.horichain:
        noised = features.copy()
        noised[:, row_columns(owned_rows(participant_id, n_participants))] = noise
        return noised
    slices = slice_vertical(features, n_participants)
    slices[participant_id] = noise
    return slices
