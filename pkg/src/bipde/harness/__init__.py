"""Experiment runner: configs, training runs, sweeps and result export."""
from .config import KINDS, ConfigError, ExperimentConfig, describe, parse_axis
from .metrics import CSV_COLUMNS, MetricsReport, ParamStats, Section, r2_per_param
from .runner import (RBF_CASES, NumericalFailure, RunResult, SweepCell, evaluate_encoder,
                     export_results, generate, load_estimator, run_rbf_noise_cases, sweep,
                     sweep_rows, train)

__all__ = [
    "KINDS", "ConfigError", "ExperimentConfig", "describe", "parse_axis", "CSV_COLUMNS",
    "MetricsReport", "ParamStats", "Section", "r2_per_param", "RBF_CASES", "NumericalFailure",
    "RunResult", "SweepCell", "evaluate_encoder", "export_results", "generate", "load_estimator",
    "run_rbf_noise_cases", "sweep", "sweep_rows", "train",
]
