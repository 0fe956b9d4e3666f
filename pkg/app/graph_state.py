#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
LangGraph State Model
"""

from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field

from .models import AveragedMetrics, ExperimentConfig, ImportanceProfile, RunResult


class ExperimentState(BaseModel):
    """State carried through one experiment"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    # Input
    config: ExperimentConfig
    checkpoint_dir: Optional[Path] = None

    # Data (SampleSet / DatasetBundle, kept opaque to pydantic)
    samples: Optional[Any] = None
    bundle: Optional[Any] = None

    # Results
    runs: List[RunResult] = Field(default_factory=list)
    averaged: Dict[str, AveragedMetrics] = Field(default_factory=dict)
    importance: Optional[ImportanceProfile] = None

    # Error handling
    error: Optional[str] = None
    error_message: Optional[str] = None

    # Metadata
    processing_steps: List[str] = Field(default_factory=list)
    timings: Dict[str, float] = Field(default_factory=dict)

    def add_step(self, step: str):
        """Add processing step for debugging"""
        self.processing_steps = [*self.processing_steps, step]

    def add_timing(self, name: str, seconds: float):
        self.timings = {**self.timings, name: round(seconds, 3)}

    def set_error(self, error_type: str, message: str):
        """Set error state"""
        self.error = error_type
        self.error_message = message
        self.add_step(f"ERROR: {error_type} - {message}")

    def has_error(self) -> bool:
        """Check if state has error"""
        return self.error is not None
