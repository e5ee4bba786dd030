"""Iterative sparse identification of polynomial discrete-time flow maps."""

from .dictionary import (
    DEFAULT_CAP,
    Dictionary,
    DictionaryCapError,
    DimensionError,
    FeatureMatrix,
    Monomial,
    dictionary_size,
    evaluate,
    evaluate_array,
    expand,
    full_dictionary,
    unity_set,
)
from .dynamics import (
    LorenzParams,
    NoiseSpec,
    SimulationError,
    add_noise_snr,
    logistic_series,
    simulate_lorenz,
    sum_signal_experiment,
    surrogate_series,
)
from .engine import (
    FitConfig,
    FitReport,
    ModelFormatError,
    Rollout,
    SparseModel,
    fit,
    fit_conventional,
    fit_iterative,
    modeling_error,
    predict_one_step,
    rollout,
)
from .io import ConfigError, DataError, RunConfig, TimeSeries, load_config, parse_config, read_csv, write_csv
from .solver import LassoOptions, LassoSolution, kkt_violation, lasso, least_squares_pinv, objective

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DEFAULT_CAP",
    "DataError",
    "Dictionary",
    "DictionaryCapError",
    "DimensionError",
    "FeatureMatrix",
    "FitConfig",
    "FitReport",
    "LassoOptions",
    "LassoSolution",
    "LorenzParams",
    "ModelFormatError",
    "Monomial",
    "NoiseSpec",
    "Rollout",
    "RunConfig",
    "SimulationError",
    "SparseModel",
    "TimeSeries",
    "add_noise_snr",
    "dictionary_size",
    "evaluate",
    "evaluate_array",
    "expand",
    "fit",
    "fit_conventional",
    "fit_iterative",
    "full_dictionary",
    "kkt_violation",
    "lasso",
    "least_squares_pinv",
    "load_config",
    "logistic_series",
    "modeling_error",
    "objective",
    "parse_config",
    "predict_one_step",
    "read_csv",
    "rollout",
    "simulate_lorenz",
    "sum_signal_experiment",
    "surrogate_series",
    "unity_set",
    "write_csv",
]
