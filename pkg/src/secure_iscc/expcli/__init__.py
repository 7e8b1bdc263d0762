"""Configuration files, batch runs and result bundles."""

from .config_io import config_hash, config_text, load_config, write_config
from .runner import RunSpec, apply_sweep, load_state, run, run_cell, state_tables

__all__ = [
    "RunSpec",
    "apply_sweep",
    "config_hash",
    "config_text",
    "load_config",
    "load_state",
    "run",
    "run_cell",
    "state_tables",
    "write_config",
]
