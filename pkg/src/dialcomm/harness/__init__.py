"""Experiment harness: configuration, runner, reports and the command line."""
from .config import ENV_PREFIX, ConfigError, RunConfig, build, env_overrides, load, loads, parse_text
from .runner import aggregate, bootstrap_interval, final_window, make_trainer, run, train_seed
from .summarize import SummaryError, SummaryRow, format_table, summarize

__all__ = [
    "ENV_PREFIX", "ConfigError", "RunConfig", "build", "env_overrides", "load", "loads", "parse_text",
    "aggregate", "bootstrap_interval", "final_window", "make_trainer", "run", "train_seed",
    "SummaryError", "SummaryRow", "format_table", "summarize",
]
