"""Experiment harness: config, checkpoints, metrics, drivers, CLI."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import ConfigError, config_from_mapping, config_hash, load_config
from .experiments import ensure_run_dir, select_model
from .metrics import MetricsRow, emit_plot_data, read_metrics, write_metrics

__all__ = [
    "Checkpoint",
    "ConfigError",
    "MetricsRow",
    "config_from_mapping",
    "config_hash",
    "emit_plot_data",
    "ensure_run_dir",
    "load_checkpoint",
    "load_config",
    "read_metrics",
    "save_checkpoint",
    "select_model",
    "write_metrics",
]
