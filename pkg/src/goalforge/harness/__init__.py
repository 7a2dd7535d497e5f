"""Experiment orchestration: config, pipeline stages, reporting, CLI."""

from .config import ExperimentConfig, config_from_dict, load_config, persist_snapshot
from .pipeline import (
    cmd_collect,
    cmd_eval,
    cmd_train_rl,
    cmd_train_vae,
    run_pipeline,
)
from .report import cmd_report, percent_improvement

__all__ = [
    "ExperimentConfig", "config_from_dict", "load_config", "persist_snapshot",
    "cmd_collect", "cmd_train_vae", "cmd_train_rl", "cmd_eval", "run_pipeline",
    "cmd_report", "percent_improvement",
]
