"""Causal feature discovery (MVGC, PCMCI+) and GRU-LSTM forecasting."""

from ._core import (
    CausalcastError,
    Dataset,
    __version__,
    aggregate_daily_to_monthly,
    benjamini_hochberg,
    bh_adjust,
    f_cdf,
    generate_var,
    graph_to_dot,
    impute,
    load_csv,
    mae,
    mvgc,
    parameter_count,
    parse_config,
    parse_csv,
    partial_correlation,
    pcmci_plus,
    percentage_metrics,
    r2,
    random_planted_graph,
    rmse,
    run_cli,
    run_experiment,
    save_csv,
    t_cdf,
)

__all__ = [
    "CausalcastError",
    "Dataset",
    "__version__",
    "aggregate_daily_to_monthly",
    "benjamini_hochberg",
    "bh_adjust",
    "f_cdf",
    "generate_var",
    "graph_to_dot",
    "impute",
    "load_csv",
    "mae",
    "mvgc",
    "parameter_count",
    "parse_config",
    "parse_csv",
    "partial_correlation",
    "pcmci_plus",
    "percentage_metrics",
    "r2",
    "random_planted_graph",
    "rmse",
    "run_cli",
    "run_experiment",
    "save_csv",
    "t_cdf",
]
