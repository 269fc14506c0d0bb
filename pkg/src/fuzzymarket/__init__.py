"""Fuzzy-demand synthetic market generation and a forecasting benchmark.

Generates deterministic synthetic price series from a single fuzzy-logic
trading heuristic and benchmarks forecasters on synthetic and real series:
rolling-refit ARIMA against an MLP trained normally, with synthetic-data
augmentation, or with first-order gradient-based meta-learning.
"""

__version__ = "0.1.0"

from . import data, evaluation, forecast, rng, simgen, train  # noqa: F401
