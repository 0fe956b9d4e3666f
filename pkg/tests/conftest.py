#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Shared fixtures: small synthetic MNIST-shaped data sets and experiment configs
"""

import gzip
import struct
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
import yaml

from app.dataset import CSV_COLUMNS, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC, DatasetBundle, SampleSet, stratified_split
from app.models import IMAGE_SIDE, N_CLASSES, N_FEATURES


def make_samples(per_class: int = 20, seed: int = 0) -> SampleSet:
    """Class prototypes plus noise, quantized to 8-bit pixels like MNIST"""
    rng = np.random.default_rng(seed)
    prototypes = (rng.uniform(0.0, 1.0, size=(N_CLASSES, N_FEATURES)) > 0.7).astype(np.float64)
    labels = np.repeat(np.arange(N_CLASSES), per_class)
    rng.shuffle(labels)
    noise = rng.normal(0.0, 0.15, size=(len(labels), N_FEATURES))
    pixels = np.clip(np.round((0.8 * prototypes[labels] + noise) * 255.0), 0, 255)
    return SampleSet(pixels / 255.0, labels.astype(np.int64), np.arange(len(labels), dtype=np.int64))


def write_csv(path: Path, samples: SampleSet) -> Path:
    pixels = np.round(samples.features * 255.0).astype(np.int64)
    frame = pd.DataFrame(np.column_stack([samples.labels, pixels]), columns=CSV_COLUMNS)
    frame.to_csv(path, index=False)
    return path


def write_idx(images_path: Path, labels_path: Path, samples: SampleSet) -> None:
    pixels = np.round(samples.features * 255.0).astype(np.uint8)
    images = struct.pack(">IIII", IDX_IMAGES_MAGIC, len(samples), IMAGE_SIDE, IMAGE_SIDE) + pixels.tobytes()
    labels = struct.pack(">II", IDX_LABELS_MAGIC, len(samples)) + samples.labels.astype(np.uint8).tobytes()
    for path, payload in ((images_path, images), (labels_path, labels)):
        opener = gzip.open if Path(path).suffix == ".gz" else open
        with opener(path, "wb") as fh:
            fh.write(payload)


@pytest.fixture
def samples() -> SampleSet:
    return make_samples(per_class=20, seed=0)


@pytest.fixture
def bundle(samples) -> DatasetBundle:
    return stratified_split(samples, 0.8, rng_seed=0)


@pytest.fixture
def csv_path(tmp_path, samples) -> Path:
    return write_csv(tmp_path / "mnist_small.csv", samples)


@pytest.fixture
def config_dict(csv_path) -> dict:
    """Small but complete config; tests edit it and dump it to YAML"""
    return {
        "version": 1,
        "architecture": "horichain",
        "data": {"kind": "csv", "csv_path": str(csv_path)},
        "subsample_fraction": 1.0,
        "n_runs": 2,
        "schedule": {"epochs": 2},
        "network": {
            "horichain_hidden": [16],
            "chain_hidden": 8,
            "passive_width": 4,
            "head_hidden": [8],
        },
    }


def dump_config(config: dict) -> bytes:
    return yaml.safe_dump(config, sort_keys=False).encode("utf-8")
