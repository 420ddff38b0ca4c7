"""Experiment runner: configuration, sweeps, outputs and the ``bench`` command."""

from .config import ExperimentConfig, load_config, parse_config
from .sweep import SweepResult, SweepRow, emit_outputs, overhead_report, run_sweep

__all__ = ["ExperimentConfig", "SweepResult", "SweepRow", "emit_outputs", "load_config",
           "overhead_report", "parse_config", "run_sweep"]
