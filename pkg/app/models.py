#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Pydantic models and data structures
"""

import math
from enum import Enum
from pathlib import Path
from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

N_CLASSES = 10
IMAGE_SIDE = 28
N_FEATURES = IMAGE_SIDE * IMAGE_SIDE


class Architecture(str, Enum):
    horichain = "horichain"
    vertichain = "vertichain"
    verticomb = "verticomb"

    @property
    def is_vertical(self) -> bool:
        return self is not Architecture.horichain


class Activation(str, Enum):
    relu = "relu"
    softmax = "softmax"
    identity = "identity"


class PartitionKind(str, Enum):
    horizontal = "horizontal"
    vertical = "vertical"


class EvalMode(str, Enum):
    unmarked = "unmarked"
    watermarked = "watermarked"


class LoaderKind(str, Enum):
    csv = "csv"
    idx = "idx"


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


# =============================================================================
# ATTACKS
# =============================================================================

class NoAttack(StrictModel):
    kind: Literal["none"] = "none"


class WatermarkSpec(StrictModel):
    kind: Literal["watermark"] = "watermark"
    strip_len: int = Field(10, ge=1)
    gap_len: int = Field(8, ge=0)
    intensity: float = Field(1.0, ge=0.0, le=1.0)
    target_label: int = Field(0, ge=0, lt=N_CLASSES)
    poison_fraction: float = Field(0.0, ge=0.0, le=1.0)
    horizontal_rows: List[int] = Field(default_factory=lambda: [0, 6, 12, 18])
    adversary_id: Optional[int] = None  # None: participant 0 (HFL) / active party (VFL)

    @model_validator(mode="after")
    def _strips_cover_row(self) -> "WatermarkSpec":
        if 2 * self.strip_len + self.gap_len != IMAGE_SIDE:
            raise ValueError(
                f"strip_len + gap_len + strip_len must equal {IMAGE_SIDE}, "
                f"got {self.strip_len} + {self.gap_len} + {self.strip_len}"
            )
        return self

    @field_validator("horizontal_rows")
    @classmethod
    def _rows_in_image(cls, rows: List[int]) -> List[int]:
        bad = [r for r in rows if not 0 <= r < IMAGE_SIDE]
        if bad:
            raise ValueError(f"rows out of range 0..{IMAGE_SIDE - 1}: {bad}")
        return rows


class GradientPoisonSpec(StrictModel):
    kind: Literal["gradient"] = "gradient"
    multiplier: float = -1.0
    adversary_id: int = Field(0, ge=0)

    @field_validator("multiplier")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("multiplier must be finite")
        return value


AttackConfig = Union[NoAttack, WatermarkSpec, GradientPoisonSpec]


# =============================================================================
# CONFIGURATION
# =============================================================================

class TrainingSchedule(StrictModel):
    epochs: int = Field(3, ge=1)
    rounds_per_handoff: int = Field(2, ge=1)
    learning_rate: float = Field(0.01, gt=0.0)
    rng_seed: int = Field(0, ge=0)


class DataSource(StrictModel):
    kind: LoaderKind = LoaderKind.csv
    csv_path: Optional[Path] = None
    images_path: Optional[Path] = None
    labels_path: Optional[Path] = None
    # optional second IDX pair (the canonical 10k test files), pooled before splitting
    test_images_path: Optional[Path] = None
    test_labels_path: Optional[Path] = None
    max_samples: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _paths_for_kind(self) -> "DataSource":
        if self.kind is LoaderKind.csv and self.csv_path is None:
            raise ValueError("csv_path is required when kind is csv")
        if self.kind is LoaderKind.idx and (self.images_path is None or self.labels_path is None):
            raise ValueError("images_path and labels_path are required when kind is idx")
        if (self.test_images_path is None) != (self.test_labels_path is None):
            raise ValueError("test_images_path and test_labels_path go together")
        return self

    def paths(self) -> List[Path]:
        candidates = [self.csv_path, self.images_path, self.labels_path,
                      self.test_images_path, self.test_labels_path]
        return [p for p in candidates if p is not None]


class NetworkConfig(StrictModel):
    horichain_hidden: List[int] = Field(default_factory=lambda: [448, 448, 50])
    chain_hidden: int = Field(28, ge=1)
    passive_width: int = Field(64, ge=1)
    passive_activation: Activation = Activation.identity
    head_hidden: List[int] = Field(default_factory=lambda: [50])


class ImportanceConfig(StrictModel):
    enabled: Optional[bool] = None  # None: baseline configs only
    noise_seeds: int = Field(3, ge=1)


class ExperimentConfig(StrictModel):
    version: Literal[1] = 1
    name: Optional[str] = None
    architecture: Architecture
    data: DataSource
    subsample_fraction: float = Field(0.25, gt=0.0, le=1.0)
    train_fraction: float = Field(0.8, gt=0.0, lt=1.0)
    n_participants: int = Field(7, ge=1)
    active_id: int = Field(6, ge=0)
    chain_order: Optional[List[int]] = None
    schedule: TrainingSchedule = Field(default_factory=TrainingSchedule)
    network: NetworkConfig = Field(default_factory=NetworkConfig)
    attack: AttackConfig = Field(default_factory=NoAttack, discriminator="kind")
    n_runs: int = Field(3, ge=1)
    base_seed: int = Field(0, ge=0)
    importance: ImportanceConfig = Field(default_factory=ImportanceConfig)
    save_checkpoints: bool = False
    output_dir: Optional[Path] = None

    @model_validator(mode="after")
    def _ids_in_federation(self) -> "ExperimentConfig":
        if self.active_id >= self.n_participants:
            raise ValueError(f"active_id {self.active_id} outside 0..{self.n_participants - 1}")
        if self.chain_order is not None and sorted(self.chain_order) != list(range(self.n_participants)):
            raise ValueError("chain_order must be a permutation of all participant ids")
        return self

    @property
    def is_baseline(self) -> bool:
        return isinstance(self.attack, NoAttack)

    @property
    def importance_enabled(self) -> bool:
        if self.importance.enabled is None:
            return self.is_baseline
        return self.importance.enabled

    def config_key(self, eval_mode: EvalMode) -> str:
        """Group key used when averaging runs"""
        attack = self.attack
        if isinstance(attack, WatermarkSpec):
            attack_part = f"watermark:{attack.poison_fraction:g}"
        elif isinstance(attack, GradientPoisonSpec):
            attack_part = f"gradient:{attack.multiplier:g}"
        else:
            attack_part = "none"
        return f"{self.architecture.value}/{attack_part}/{eval_mode.value}"


# =============================================================================
# TRACE / METRICS / REPORT
# =============================================================================

class TraceRecord(BaseModel):
    step: int
    sender: Union[int, str]
    receiver: Union[int, str]
    payload_kind: Literal["weights", "activation", "gradient"]
    shape: List[int]


class EpochMetrics(BaseModel):
    epoch: int
    train_accuracy: Optional[float] = None
    test_accuracy: Optional[float] = None
    mean_loss: float


class MetricsRecord(BaseModel):
    accuracy: float = Field(ge=0.0, le=1.0)
    macro_f1: float = Field(ge=0.0, le=1.0)
    confusion: List[List[int]]
    eval_mode: EvalMode
    run_seed: int
    config_key: str
    attack_success_rate: Optional[float] = None


class AveragedMetric(BaseModel):
    mean: float
    std: float


class AveragedMetrics(BaseModel):
    config_key: str
    eval_mode: EvalMode
    n_runs: int
    accuracy: AveragedMetric
    macro_f1: AveragedMetric
    attack_success_rate: Optional[AveragedMetric] = None
    representative_seed: int
    representative_confusion: List[List[int]]


class ImportanceProfile(BaseModel):
    baseline_accuracy: float
    noised_accuracy: List[float]
    drops: List[float]
    shares: Optional[List[float]] = None
    degenerate: bool = False
    noise_seeds: List[int] = Field(default_factory=list)


class RunResult(BaseModel):
    run_index: int
    seed: int
    history: List[EpochMetrics] = Field(default_factory=list)
    records: Dict[str, MetricsRecord] = Field(default_factory=dict)
    importance: Optional[ImportanceProfile] = None
    trace_summary: Dict[str, int] = Field(default_factory=dict)


class ExperimentReport(BaseModel):
    schema_version: Literal[1] = 1
    config: ExperimentConfig
    runs: List[RunResult] = Field(default_factory=list)
    averaged: Dict[str, AveragedMetrics] = Field(default_factory=dict)
    importance: Optional[ImportanceProfile] = None
    processing_steps: List[str] = Field(default_factory=list)
    timings: Dict[str, float] = Field(default_factory=dict)
