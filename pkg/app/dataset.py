#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
MNIST loading, stratified splitting and HFL / VFL partitioning
"""

import gzip
import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import ConfigurationError, DataFormatError, InputError
from .models import IMAGE_SIDE, N_CLASSES, N_FEATURES, DataSource, LoaderKind, PartitionKind

logger = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CSV_COLUMNS = ["label"] + [f"pixel{i}" for i in range(N_FEATURES)]


class Sample(NamedTuple):
    features: np.ndarray
    label: int
    sample_id: int


@dataclass
class SampleSet:
    """Samples stored column-wise: features (n, width), labels (n,), ids (n,)"""
    features: np.ndarray
    labels: np.ndarray
    ids: np.ndarray

    def __len__(self) -> int:
        return self.labels.shape[0]

    def __getitem__(self, i: int) -> Sample:
        return Sample(self.features[i], int(self.labels[i]), int(self.ids[i]))

    @classmethod
    def empty(cls, width: int = N_FEATURES) -> "SampleSet":
        return cls(np.zeros((0, width)), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))

    @property
    def width(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: np.ndarray) -> "SampleSet":
        indices = np.asarray(indices, dtype=np.int64)
        return SampleSet(self.features[indices], self.labels[indices], self.ids[indices])

    def with_features(self, features: np.ndarray) -> "SampleSet":
        return SampleSet(features, self.labels, self.ids)

    def class_counts(self) -> Dict[int, int]:
        classes, counts = np.unique(self.labels, return_counts=True)
        return {int(c): int(n) for c, n in zip(classes, counts)}


@dataclass
class DatasetBundle:
    train: SampleSet
    test: SampleSet

    @property
    def class_counts(self) -> Dict[str, Dict[int, int]]:
        return {"train": self.train.class_counts(), "test": self.test.class_counts()}


@dataclass
class Partition:
    participant_id: int
    kind: PartitionKind
    features: np.ndarray
    ids: np.ndarray
    labels: Optional[np.ndarray]
    owned_rows: Optional[Tuple[int, ...]] = None

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    @property
    def feature_width(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.ids.shape[0]


# =============================================================================
# LOADERS
# =============================================================================

def _read_bytes(path: Path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    try:
        with opener(path, "rb") as fh:
            return fh.read()
    except (OSError, EOFError) as e:
        raise DataFormatError(f"cannot read {path}: {e}") from e


def load_idx(images_path: Path, labels_path: Path) -> SampleSet:
    """Read an IDX image/label file pair (optionally gzipped)"""
    images_raw = _read_bytes(images_path)
    labels_raw = _read_bytes(labels_path)

    if len(images_raw) < 16:
        raise DataFormatError("image file shorter than its header", path=str(images_path))
    magic, n_images, n_rows, n_cols = struct.unpack(">IIII", images_raw[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise DataFormatError(f"bad image magic number 0x{magic:08x}", path=str(images_path))
    if (n_rows, n_cols) != (IMAGE_SIDE, IMAGE_SIDE):
        raise DataFormatError("images must be 28x28", rows=n_rows, cols=n_cols)

    if len(labels_raw) < 8:
        raise DataFormatError("label file shorter than its header", path=str(labels_path))
    magic, n_labels = struct.unpack(">II", labels_raw[:8])
    if magic != IDX_LABELS_MAGIC:
        raise DataFormatError(f"bad label magic number 0x{magic:08x}", path=str(labels_path))
    if n_labels != n_images:
        raise DataFormatError("image and label counts differ", images=n_images, labels=n_labels)

    pixels = np.frombuffer(images_raw, dtype=np.uint8, offset=16)
    if pixels.size < n_images * N_FEATURES:
        raise DataFormatError("truncated image payload", expected=n_images * N_FEATURES, got=pixels.size)
    labels = np.frombuffer(labels_raw, dtype=np.uint8, offset=8)
    if labels.size < n_labels:
        raise DataFormatError("truncated label payload", expected=n_labels, got=labels.size)
    labels = labels[:n_labels].astype(np.int64)
    if np.any(labels >= N_CLASSES):
        raise DataFormatError("label outside 0..9")

    features = pixels[: n_images * N_FEATURES].reshape(n_images, N_FEATURES) / 255.0
    logger.info("loaded %d IDX samples from %s", n_images, images_path)
    return SampleSet(features, labels, np.arange(n_images, dtype=np.int64))


def load_csv(path: Path) -> SampleSet:
    """Read the labeled CSV distribution: header label,pixel0..pixel783"""
    # header=None on both reads: a wider data row must not turn into an implicit index
    try:
        header = pd.read_csv(path, header=None, nrows=1, dtype=str)
    except pd.errors.EmptyDataError as e:
        raise DataFormatError(f"{path} has no header row") from e
    except pd.errors.ParserError as e:
        raise DataFormatError(f"unreadable header: {e}") from e
    except OSError as e:
        raise DataFormatError(f"cannot read {path}: {e}") from e
    if header.iloc[0].tolist() != CSV_COLUMNS:
        raise DataFormatError("header must be label,pixel0,...,pixel783", columns=header.shape[1])

    try:
        df = pd.read_csv(path, header=None, skiprows=1)
    except pd.errors.EmptyDataError:
        return SampleSet.empty()
    except pd.errors.ParserError as e:
        raise DataFormatError(f"row width is not {len(CSV_COLUMNS)}: {e}") from e
    except OSError as e:
        raise DataFormatError(f"cannot read {path}: {e}") from e

    if df.shape[1] != len(CSV_COLUMNS):
        raise DataFormatError(f"row width is not {len(CSV_COLUMNS)}", width=df.shape[1])
    df.columns = CSV_COLUMNS
    if df.empty:
        return SampleSet.empty()

    non_integer = [c for c in df.columns if not pd.api.types.is_integer_dtype(df[c])]
    if non_integer:
        raise DataFormatError("non-integer or missing cells", columns=non_integer[:5])

    labels = df["label"].to_numpy(dtype=np.int64)
    if labels.min() < 0 or labels.max() >= N_CLASSES:
        raise DataFormatError("label outside 0..9")
    pixels = df[CSV_COLUMNS[1:]].to_numpy(dtype=np.int64)
    if pixels.min() < 0 or pixels.max() > 255:
        raise DataFormatError("pixel value outside 0..255")

    logger.info("loaded %d CSV samples from %s", len(labels), path)
    return SampleSet(pixels / 255.0, labels, np.arange(len(labels), dtype=np.int64))


def load_source(source: DataSource, resolve: Callable[[Path], Path], rng_seed: int = 0) -> SampleSet:
    """Load the configured data source, pooling the optional second IDX pair"""
    if source.kind is LoaderKind.csv:
        samples = load_csv(resolve(source.csv_path))
    else:
        samples = load_idx(resolve(source.images_path), resolve(source.labels_path))
        if source.test_images_path is not None:
            extra = load_idx(resolve(source.test_images_path), resolve(source.test_labels_path))
            samples = SampleSet(
                np.concatenate([samples.features, extra.features]),
                np.concatenate([samples.labels, extra.labels]),
                np.arange(len(samples) + len(extra), dtype=np.int64),
            )

    if source.max_samples is not None and len(samples) > source.max_samples:
        samples = subsample(samples, source.max_samples / len(samples), rng_seed)
    return samples


# =============================================================================
# SPLITTING
# =============================================================================

def _class_indices(labels: np.ndarray) -> Dict[int, np.ndarray]:
    return {int(c): np.flatnonzero(labels == c) for c in np.unique(labels)}


def subsample(samples: SampleSet, fraction: float, rng_seed: int) -> SampleSet:
    """Stratified subsample keeping floor(n_c * fraction) (at least 2) per class"""
    if not 0.0 < fraction <= 1.0:
        raise ConfigurationError("subsample fraction must be in (0, 1]", fraction=fraction)
    if fraction == 1.0:
        return samples

    rng = np.random.default_rng(rng_seed)
    keep = []
    for _, idx in sorted(_class_indices(samples.labels).items()):
        n_keep = min(len(idx), max(2, math.floor(len(idx) * fraction + 1e-9)))
        keep.append(rng.permutation(idx)[:n_keep])
    return samples.subset(np.sort(np.concatenate(keep)))


def stratified_split(samples: SampleSet, train_fraction: float, rng_seed: int) -> DatasetBundle:
    """Per class, floor(n_c * fraction) samples go to train and the rest to test"""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigurationError("train_fraction must be in (0, 1)", train_fraction=train_fraction)

    rng = np.random.default_rng(rng_seed)
    train_idx, test_idx = [], []
    for label, idx in sorted(_class_indices(samples.labels).items()):
        if len(idx) < 2:
            raise ConfigurationError("class has fewer than 2 samples", label=label, count=len(idx))
        shuffled = rng.permutation(idx)
        n_train = math.floor(len(idx) * train_fraction + 1e-9)
        train_idx.append(shuffled[:n_train])
        test_idx.append(shuffled[n_train:])

    if not train_idx:
        return DatasetBundle(SampleSet.empty(samples.width), SampleSet.empty(samples.width))
    return DatasetBundle(
        train=samples.subset(np.sort(np.concatenate(train_idx))),
        test=samples.subset(np.sort(np.concatenate(test_idx))),
    )


# =============================================================================
# PARTITIONING
# =============================================================================

def partition_horizontal(bundle: DatasetBundle, n_participants: int, rng_seed: int) -> List[Partition]:
    """Deal every class evenly over the participants (HFL: disjoint samples, shared features)"""
    if n_participants < 1:
        raise ConfigurationError("need at least one participant", n_participants=n_participants)

    train = bundle.train
    rng = np.random.default_rng(rng_seed)
    assigned: List[List[np.ndarray]] = [[] for _ in range(n_participants)]
    offset = 0
    for label, idx in sorted(_class_indices(train.labels).items()):
        if len(idx) < n_participants:
            raise ConfigurationError(
                "class has fewer samples than participants",
                label=label, count=len(idx), n_participants=n_participants,
            )
        shuffled = rng.permutation(idx)
        # remainders rotate so shard totals stay within one sample of each other
        owners = (offset + np.arange(len(shuffled))) % n_participants
        for pid in range(n_participants):
            assigned[pid].append(shuffled[owners == pid])
        offset = (offset + len(shuffled)) % n_participants

    partitions = []
    for pid, chunks in enumerate(assigned):
        idx = np.sort(np.concatenate(chunks)) if chunks else np.zeros(0, dtype=np.int64)
        shard = train.subset(idx)
        partitions.append(Partition(
            participant_id=pid,
            kind=PartitionKind.horizontal,
            features=shard.features,
            ids=shard.ids,
            labels=shard.labels,
        ))
    return partitions


def owned_rows(participant_id: int, n_participants: int) -> Tuple[int, ...]:
    """Rotating row assignment: participant i owns rows i, i+n, i+2n, ..."""
    if n_participants < 1 or IMAGE_SIDE % n_participants != 0:
        raise ConfigurationError(
            f"n_participants must divide {IMAGE_SIDE}", n_participants=n_participants,
        )
    return tuple(range(participant_id, IMAGE_SIDE, n_participants))


def row_columns(rows: Sequence[int]) -> np.ndarray:
    """Flat 784-vector column indices of the given image rows, in row order"""
    return np.concatenate([np.arange(r * IMAGE_SIDE, (r + 1) * IMAGE_SIDE) for r in rows])


def slice_vertical(features: np.ndarray, n_participants: int) -> List[np.ndarray]:
    """Split (n, 784) features into each participant's row slice"""
    return [features[:, row_columns(owned_rows(pid, n_participants))] for pid in range(n_participants)]


def partition_vertical(bundle: DatasetBundle, n_participants: int, active_id: int) -> List[Partition]:
    """Row-interleaved feature split of the train set (VFL: same samples, disjoint features)"""
    if n_participants < 1 or IMAGE_SIDE % n_participants != 0:
        raise ConfigurationError(
            f"n_participants must divide {IMAGE_SIDE}", n_participants=n_participants,
        )
    if not 0 <= active_id < n_participants:
        raise ConfigurationError("active_id outside the federation", active_id=active_id)

    train = bundle.train
    partitions = []
    for pid, features in enumerate(slice_vertical(train.features, n_participants)):
        partitions.append(Partition(
            participant_id=pid,
            kind=PartitionKind.vertical,
            features=features,
            ids=train.ids.copy(),
            labels=train.labels.copy() if pid == active_id else None,
            owned_rows=owned_rows(pid, n_participants),
        ))
    return partitions


def reassemble_vertical(slices: Sequence[np.ndarray], rows_per_slice: Sequence[Sequence[int]]) -> np.ndarray:
    """Inverse of vertical slicing: put every slice's rows back in image order"""
    n = slices[0].shape[0]
    out = np.zeros((n, N_FEATURES))
    for features, rows in zip(slices, rows_per_slice):
        out[:, row_columns(rows)] = features
    return out


def make_noise_features(length: int, rng_seed: int) -> np.ndarray:
    """Independent uniform [0, 1] values"""
    if length <= 0:
        raise InputError("noise length must be positive", length=length)
    return np.random.default_rng(rng_seed).uniform(0.0, 1.0, size=length)
