"""Experiment orchestration, text ingestion, plotting and the command line."""
from .config import ExperimentConfig, load_config, parse_config
from .experiment import run_experiment, run_ring_experiment, run_text_experiment

__all__ = [
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "run_experiment",
    "run_ring_experiment",
    "run_text_experiment",
]
