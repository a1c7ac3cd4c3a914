"""Conditional-probability RBMs for nonlinear system identification."""
from .codec import EncodingConfig, decode, encode
from .distributions import BINARY, HALFLINE, UNIT, SupportInterval, symmetric
from .inference import cond_loglik, conditional_mean_y, log_denominator, sample_y_given_x
from .rbm_core import ConditionalRbm, GenerativeRbm, energy, free_energy, make_rng
from .sysid import (
    IdentificationModel,
    IoSeries,
    RegressorSpec,
    build_regressors,
    fit_identifier,
    mse,
    predict_series,
    simulate_series,
)
from .training import StackSpec, TrainingConfig, cascade_pretrain, train

__all__ = [
    "BINARY", "HALFLINE", "UNIT", "ConditionalRbm", "EncodingConfig", "GenerativeRbm",
    "IdentificationModel", "IoSeries", "RegressorSpec", "StackSpec", "SupportInterval",
    "TrainingConfig", "build_regressors", "cascade_pretrain", "cond_loglik",
    "conditional_mean_y", "decode", "encode", "energy", "fit_identifier", "free_energy",
    "log_denominator", "make_rng", "mse", "predict_series", "sample_y_given_x",
    "simulate_series", "symmetric", "train",
]
__version__ = "0.1.0"
