"""Experiment configs, end-to-end runs, comparisons and plots."""
from .compare import ComparisonRow, MismatchedRunsError, compare_runs, write_comparison_csv
from .config import ConfigError, ExperimentConfig, default_experiment_config, parse_config, parse_config_text
from .plots import emit_plots
from .runner import FORMAT_VERSION, PreparedSite, RunRecord, SiteRecord, prepare_sites, run_experiment, site_specs

__all__ = [
    "FORMAT_VERSION",
    "ComparisonRow",
    "ConfigError",
    "ExperimentConfig",
    "MismatchedRunsError",
    "PreparedSite",
    "RunRecord",
    "SiteRecord",
    "compare_runs",
    "default_experiment_config",
    "emit_plots",
    "parse_config",
    "parse_config_text",
    "prepare_sites",
    "run_experiment",
    "site_specs",
    "write_comparison_csv",
]
