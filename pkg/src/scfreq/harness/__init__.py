"""Experiment harness: configuration, orchestration, persistence and CLI."""

from .config import (
    ConfigError,
    ExperimentConfig,
    OracleSettings,
    ScenarioSpec,
    StartSpec,
    builtin_scenarios,
    config_to_dict,
    dump_config,
    load_config,
)
from .experiment import CSV_COLUMNS, ExperimentResult, RunResult, drift_starts, load_results, run_experiment
from .report import REPORT_COLUMNS, report
from .sweep import SweepResult, sweep

__all__ = [
    "CSV_COLUMNS",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentResult",
    "OracleSettings",
    "REPORT_COLUMNS",
    "RunResult",
    "ScenarioSpec",
    "StartSpec",
    "SweepResult",
    "builtin_scenarios",
    "config_to_dict",
    "drift_starts",
    "dump_config",
    "load_config",
    "load_results",
    "report",
    "run_experiment",
    "sweep",
]
