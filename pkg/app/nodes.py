#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
LangGraph Nodes - one experiment stage per node
"""

import logging
import time
from collections import defaultdict

from .dataset import load_source, stratified_split, subsample
from .errors import ChainFLError, ConfigurationError
from .graph_state import ExperimentState
from .metrics import average_importance, average_runs
from .services import run_once
from .settings import settings

logger = logging.getLogger(__name__)


def _fail(state: ExperimentState, error: Exception, context: str = "") -> ExperimentState:
    prefix = f"{context}: " if context else ""
    if isinstance(error, ChainFLError):
        state.set_error(error.category, f"{prefix}{error}")
    else:
        logger.exception("unexpected failure %s", context)
        state.set_error("ERROR", f"{prefix}{type(error).__name__}: {error}")
    return state


def n_load(state: ExperimentState) -> ExperimentState:
    """Data loading node"""
    state.add_step("load_data")
    started = time.perf_counter()
    source = state.config.data

    missing = [str(p) for p in source.paths() if not settings.resolve_data_path(p).exists()]
    if missing:
        return _fail(state, ConfigurationError("data path does not exist", paths=missing))

    try:
        samples = load_source(source, settings.resolve_data_path, state.config.base_seed)
        if state.config.subsample_fraction < 1.0:
            samples = subsample(samples, state.config.subsample_fraction, state.config.base_seed)
        state.samples = samples
        state.add_step(f"data_loaded: {len(samples)} samples")
    except Exception as e:
        return _fail(state, e, "load")

    state.add_timing("load", time.perf_counter() - started)
    return state


def n_split(state: ExperimentState) -> ExperimentState:
    """Stratified train/test split node"""
    state.add_step("split_data")
    try:
        bundle = stratified_split(state.samples, state.config.train_fraction, state.config.base_seed)
        state.bundle = bundle
        state.samples = None
        state.add_step(f"data_split: {len(bundle.train)} train / {len(bundle.test)} test")
    except Exception as e:
        return _fail(state, e, "split")
    return state


def n_train_runs(state: ExperimentState) -> ExperimentState:
    """Train and evaluate n_runs federations with seeds base_seed + k"""
    state.add_step("train_runs")
    config = state.config
    runs = []
    for k in range(config.n_runs):
        seed = config.base_seed + k
        started = time.perf_counter()
        logger.info("run %d/%d (seed %d) %s", k + 1, config.n_runs, seed, config.architecture.value)
        try:
            runs.append(run_once(config, state.bundle, k, seed, state.checkpoint_dir))
        except Exception as e:
            return _fail(state, e, f"run {k} (seed {seed})")
        state.add_timing(f"run_{k}", time.perf_counter() - started)
        state.add_step(f"run_finished: {k}")

    state.runs = runs
    return state


def n_importance(state: ExperimentState) -> ExperimentState:
    """Average the per-run client importance profiles"""
    state.add_step("client_importance")
    profiles = [run.importance for run in state.runs if run.importance is not None]
    if not profiles:
        state.add_step("importance_skipped: no profiles")
        return state
    try:
        state.importance = average_importance(profiles)
        flag = "degenerate" if state.importance.degenerate else "normalized"
        state.add_step(f"importance_averaged: {len(profiles)} runs, {flag}")
    except Exception as e:
        return _fail(state, e, "importance")
    return state


def n_summarize(state: ExperimentState) -> ExperimentState:
    """Average metrics per (config, eval mode) cell"""
    state.add_step("summarize")
    groups = defaultdict(list)
    for run in state.runs:
        for key, record in run.records.items():
            groups[key].append(record)

    try:
        state.averaged = {key: average_runs(records, min_runs=1) for key, records in sorted(groups.items())}
    except Exception as e:
        return _fail(state, e, "summarize")

    for key, cell in state.averaged.items():
        state.add_step(f"averaged: {key} over {cell.n_runs} runs")
    return state


def n_error_handler(state: ExperimentState) -> ExperimentState:
    """Error handling node"""
    state.add_step("handle_error")
    logger.error("experiment failed [%s]: %s", state.error, state.error_message)
    state.add_step(f"error_handled: {state.error}")
    return state
