"""Experiment orchestration, report tables, and the guidance service."""

from .experiments import (
    ExperimentConfig,
    ExperimentReport,
    SeedResult,
    run_experiment,
    run_seed,
)
from .tables import export_table

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "SeedResult",
    "run_experiment",
    "run_seed",
    "export_table",
]
