"""Experiment plumbing: configs, CSV records, runner, presets and CLI."""
from .config import ConfigError, ExperimentConfig
from .presets import PRESETS, get_preset, preset_names
from .records import COLUMNS, ExperimentRecord, read_csv, records_to_csv, write_csv
from .runner import SummaryRow, run, summarize

__all__ = [
    "COLUMNS",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentRecord",
    "PRESETS",
    "SummaryRow",
    "get_preset",
    "preset_names",
    "read_csv",
    "records_to_csv",
    "run",
    "summarize",
    "write_csv",
]
