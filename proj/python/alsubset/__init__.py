"""Ensemble active-learning subset search."""

import json

from ._core import (
    consensus_counts,
    duplication_histogram,
    entropy,
    error_count,
    export_plot_data,
    generate_pool,
    growth_schedule,
    mutual_information,
    predictive_mean,
    score,
    search,
    select_top_k,
    variation_ratios,
)
from ._core import run_experiment as _run_experiment

__all__ = [
    "consensus_counts",
    "duplication_histogram",
    "entropy",
    "error_count",
    "export_plot_data",
    "generate_pool",
    "growth_schedule",
    "mutual_information",
    "predictive_mean",
    "run_experiment",
    "score",
    "search",
    "select_top_k",
    "variation_ratios",
]


def run_experiment(config_text, jobs=1):
    """Runs every configured seed and returns the results document as a dict."""
    return json.loads(_run_experiment(config_text, jobs))
