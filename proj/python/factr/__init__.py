"""Python access to the factr forecasting engine."""

from ._core import (
    ConfigError,
    DataError,
    DimensionError,
    IntegrityError,
    Model,
    ModelConfig,
    calendar_covariates,
    count_params,
    git_blob_sha1,
    loglog_slope,
    low_rank_optimality_check,
    run_cli,
    synth_retail,
)

__all__ = [
    "ConfigError",
    "DataError",
    "DimensionError",
    "IntegrityError",
    "Model",
    "ModelConfig",
    "calendar_covariates",
    "count_params",
    "git_blob_sha1",
    "loglog_slope",
    "low_rank_optimality_check",
    "run_cli",
    "synth_retail",
]
