"""Python bindings of the maximum-entropy model-based RL core."""

import json

import torch  # noqa: F401  (loads libtorch before the extension)

from ._core import (
    ConfigError,
    NumericError,
    beta_schedule,
    chain_occupancy_oracle,
    default_config,
    evaluate_checkpoint,
    export_metrics_csv,
    gaussian_kl,
    grad_check,
    grad_check_components,
    jeffreys,
    lambda_return_closed_form,
    lambda_returns,
    make_env,
    occupancy_term_weights,
    occupancy_weights,
    oracle_check,
)
from . import _core


def train(config=None, out_dir=None):
    """Trains with `config` overrides (any key of default_config()) and returns metric dicts."""
    values = {k: _format(v) for k, v in (config or {}).items()}
    return [json.loads(line) for line in _core.train(values, out_dir)]


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


__all__ = [
    "ConfigError",
    "NumericError",
    "beta_schedule",
    "chain_occupancy_oracle",
    "default_config",
    "evaluate_checkpoint",
    "export_metrics_csv",
    "gaussian_kl",
    "grad_check",
    "grad_check_components",
    "jeffreys",
    "lambda_return_closed_form",
    "lambda_returns",
    "make_env",
    "occupancy_term_weights",
    "occupancy_weights",
    "oracle_check",
    "train",
]
