"""Common forecaster contract and the two reference forecasters.

A forecaster declares which scale it consumes: "normalized" models receive a
z-scored lookback (and its stats) and emit normalized steps that the harness
de-normalizes; "raw" models receive the trailing raw history and emit prices
directly.
"""

from __future__ import annotations

import numpy as np

from ..data import NormStats, denormalize
from ..simgen import GeneratorConfig, excess_demand, log_ma_ratio, step_price


class Forecaster:
    """Behavioral contract shared by every model in the benchmark."""

    name = "forecaster"
    input_scale = "normalized"  # or "raw"
    family = "deep"  # "classical" | "deep" | "baseline"

    def fit(self, *args, **kwargs):
        """Estimate whatever the model needs from training data. Baselines
        need nothing; gradient-trainable models are trained through the
        fuzzymarket.train regimes instead."""
        return self

    def predict(self, lookback: np.ndarray, horizon: int, stats: NormStats | None = None) -> np.ndarray:
        """Forecast `horizon` steps from a lookback (or trailing history, for
        raw-scale models). Must return exactly `horizon` values."""
        raise NotImplementedError


class PersistenceForecaster(Forecaster):
    """Repeat the last observed value: the naive baseline."""

    name = "persistence"
    input_scale = "raw"
    family = "baseline"

    def predict(self, lookback, horizon, stats=None):
        history = np.asarray(lookback, dtype=float)
        if len(history) == 0:
            raise ValueError("persistence needs at least one observed value")
        return np.full(horizon, history[-1])


class TransitionForecaster(Forecaster):
    """Roll the synthetic generator's own price transition forward.

    Exact on series produced by the same GeneratorConfig, so it bounds the
    error introduced by the windowing / normalization / metric plumbing
    itself. Runs on the normalized path: the lookback is restored to raw
    prices with the window stats, stepped forward, and re-normalized.
    """

    name = "transition-oracle"
    input_scale = "normalized"
    family = "baseline"

    def __init__(self, config: GeneratorConfig):
        self.config = config

    def predict(self, lookback, horizon, stats=None):
        if stats is None:
            raise ValueError("transition forecaster needs the window's normalization stats")
        prices = list(denormalize(lookback, stats))
        if len(prices) < self.config.n:
            raise ValueError(
                f"lookback of {len(prices)} cannot span the length-{self.config.n} moving average"
            )
        for _ in range(horizon):
            t = len(prices) - 1
            x = log_ma_ratio(prices, self.config.m, self.config.n, t)
            ed = excess_demand(self.config.rules, x)
            prices.append(step_price(prices[-1], ed, self.config.influence))
        raw = np.array(prices[-horizon:])
        return (raw - stats.mean) / stats.std
