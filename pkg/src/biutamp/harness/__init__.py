"""Experiment harness: specs, Monte-Carlo runner, CSV output and plots."""

from .config import PRESETS, SCHEMA, ExperimentSpec, load_spec, schema_text
from .plots import CsvSchemaError, emit_plots, read_results
from .runner import CSV_COLUMNS, aggregate, run_experiment, run_trials, trial_seed, write_csv

__all__ = [
    "PRESETS", "SCHEMA", "ExperimentSpec", "load_spec", "schema_text", "CsvSchemaError",
    "emit_plots", "read_results", "CSV_COLUMNS", "aggregate", "run_experiment", "run_trials",
    "trial_seed", "write_csv",
]
