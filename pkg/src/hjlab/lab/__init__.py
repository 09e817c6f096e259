"""Configuration-driven experiment runner."""

from .config import DEFAULT_TOLERANCES, EXPERIMENTS, SUBCOMMANDS, ExperimentConfig, load_config, parse_config
from .experiments import RUNNERS, Check, Report, preflight, run_experiment

__all__ = ["DEFAULT_TOLERANCES", "EXPERIMENTS", "SUBCOMMANDS", "ExperimentConfig", "load_config", "parse_config",
           "RUNNERS", "Check", "Report", "preflight", "run_experiment"]
