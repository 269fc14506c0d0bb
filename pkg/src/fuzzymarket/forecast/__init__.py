"""Forecasters: rolling-refit ARIMA, a from-scratch MLP, and baselines."""

from .arima import (
    AllFitsFailedError,
    ArimaForecaster,
    ArimaModel,
    ArimaOrder,
    InsufficientHistoryError,
    UnfittedModelError,
    aic,
    arima_fit,
    arima_forecast,
    arima_select_order,
    default_order_grid,
    difference,
)
from .base import Forecaster, PersistenceForecaster, TransitionForecaster
from .checkpoint import load_checkpoint, save_checkpoint
from .mlp import Adam, MlpModel, Sgd, mlp_init

__all__ = [
    "Adam",
    "AllFitsFailedError",
    "ArimaForecaster",
    "ArimaModel",
    "ArimaOrder",
    "Forecaster",
    "InsufficientHistoryError",
    "MlpModel",
    "PersistenceForecaster",
    "Sgd",
    "TransitionForecaster",
    "UnfittedModelError",
    "aic",
    "arima_fit",
    "arima_forecast",
    "arima_select_order",
    "default_order_grid",
    "difference",
    "load_checkpoint",
    "mlp_init",
    "save_checkpoint",
]
