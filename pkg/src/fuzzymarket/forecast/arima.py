"""ARIMA estimated by Hannan-Rissanen least squares, with AIC order search.

Estimation is regression-only (no likelihood optimizer): difference d times,
proxy the innovations with a long autoregression when q > 0, then regress the
differenced series on its own lags and the lagged innovation proxies.
Forecasts run the ARMA recursion with future innovations at zero and
integrate back to the original scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .base import Forecaster


class InsufficientHistoryError(ValueError):
    """History too short to estimate the requested order."""


class AllFitsFailedError(RuntimeError):
    """No order in the search grid could be fitted."""


class UnfittedModelError(RuntimeError):
    """Forecast requested from a model that was never fitted."""


@dataclass(frozen=True)
class ArimaOrder:
    p: int
    d: int
    q: int

    def __post_init__(self):
        if min(self.p, self.d, self.q) < 0:
            raise ValueError("orders must be non-negative")
        if self.p + self.q < 1 and self.d < 1:
            raise ValueError("need p + q >= 1 or d >= 1")
        if self.p > 5 or self.q > 5 or self.d > 2:
            raise ValueError(f"order {self} outside the search bounds (p,q <= 5, d <= 2)")

    def __str__(self) -> str:
        return f"({self.p},{self.d},{self.q})"


@dataclass(eq=False)
class ArimaModel:
    order: ArimaOrder
    ar_coeffs: np.ndarray
    ma_coeffs: np.ndarray
    intercept: float
    residuals: np.ndarray  # in-sample, feeds the MA recursion at forecast time
    shrink_count: int = 0  # stationarity-guard iterations applied
    fitted: bool = field(default=False)

    def __post_init__(self):
        self.ar_coeffs = np.asarray(self.ar_coeffs, dtype=float)
        self.ma_coeffs = np.asarray(self.ma_coeffs, dtype=float)
        self.residuals = np.asarray(self.residuals, dtype=float)
        if len(self.ar_coeffs) != self.order.p or len(self.ma_coeffs) != self.order.q:
            raise ValueError("coefficient lengths must match the order")


def difference(series: np.ndarray, d: int) -> np.ndarray:
    """Apply the first-difference operator d times."""
    series = np.asarray(series, dtype=float)
    if d < 0:
        raise ValueError("d must be non-negative")
    if len(series) <= d:
        raise ValueError(f"series of length {len(series)} cannot be differenced {d} times")
    for _ in range(d):
        series = np.diff(series)
    return series


def _lagmat(x: np.ndarray, lags: int) -> np.ndarray:
    """Rows t = lags..len-1, columns x[t-1], ..., x[t-lags]."""
    return np.column_stack([x[lags - k : len(x) - k] for k in range(1, lags + 1)])


def _lstsq(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least squares with a ridge fallback (penalty 1e-6) on rank deficiency."""
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        beta = np.linalg.solve(X.T @ X + 1e-6 * np.eye(X.shape[1]), X.T @ y)
    return beta, y - X @ beta


def _ar_is_stationary(phi: np.ndarray) -> bool:
    """All roots of 1 - phi_1 z - ... - phi_p z^p strictly outside the unit circle."""
    if len(phi) == 0:
        return True
    coeffs = np.concatenate(([1.0], -phi))[::-1]
    roots = np.roots(coeffs)
    return len(roots) == 0 or float(np.min(np.abs(roots))) > 1.0


def arima_fit(history: np.ndarray, order: ArimaOrder) -> ArimaModel:
    """Hannan-Rissanen fit of an ARIMA(p,d,q) with intercept.

    Non-stationary AR estimates are shrunk toward zero by 0.99 per iteration
    (at most 100 times) until the AR roots leave the unit circle.
    """
    history = np.asarray(history, dtype=float)
    p, d, q = order.p, order.d, order.q
    if len(history) < 10 * (p + q + 1) + d:
        raise InsufficientHistoryError(
            f"order {order} needs at least {10 * (p + q + 1) + d} points, got {len(history)}"
        )
    w = difference(history, d)
    n = len(w)

    if p == 0 and q == 0:
        intercept = float(np.mean(w))
        ar = np.zeros(0)
        ma = np.zeros(0)
        resid = w - intercept
    elif q == 0:
        X = np.column_stack([np.ones(n - p), _lagmat(w, p)])
        beta, resid = _lstsq(X, w[p:])
        intercept = float(beta[0])
        ar = beta[1:]
        ma = np.zeros(0)
    else:
        # innovations proxied by a long AR (Gomez-Maravall default order)
        long_order = max(2 * max(p, q), min(int(np.log(n) ** 2), n // 3))
        Xl = np.column_stack([np.ones(n - long_order), _lagmat(w, long_order)])
        _, innov = _lstsq(Xl, w[long_order:])  # length n - long_order
        # align: rows are t = long_order + q .. n-1
        w_lags = _lagmat(w, p)[long_order + q - p :] if p > 0 else np.zeros((n - long_order - q, 0))
        e_lags = _lagmat(innov, q)
        X = np.column_stack([np.ones(len(e_lags)), w_lags, e_lags])
        beta, resid = _lstsq(X, w[long_order + q :])
        intercept = float(beta[0])
        ar = beta[1 : 1 + p]
        ma = beta[1 + p :]

    shrink = 0
    while not _ar_is_stationary(ar) and shrink < 100:
        ar = ar * 0.99
        shrink += 1

    return ArimaModel(
        order=order,
        ar_coeffs=ar,
        ma_coeffs=ma,
        intercept=intercept,
        residuals=resid,
        shrink_count=shrink,
        fitted=True,
    )


def arima_forecast(model: ArimaModel, history: np.ndarray, horizon: int) -> np.ndarray:
    """Recursive h-step forecast: ARMA recursion on the differenced scale with
    future innovations at zero, then inverse differencing."""
    if not model.fitted:
        raise UnfittedModelError("fit the model before forecasting")
    history = np.asarray(history, dtype=float)
    p, d, q = model.order.p, model.order.d, model.order.q
    if len(history) < max(p, q) + d + 1:
        raise ValueError(f"history of {len(history)} too short for order {model.order}")

    # last value of each differencing level, for re-integration
    level_tails = []
    level = history
    for _ in range(d):
        level_tails.append(level[-1])
        level = np.diff(level)
    w = level

    w_ext = list(w[-p:]) if p > 0 else []
    e_ext = list(model.residuals[-q:]) if q > 0 else []
    if q > 0 and len(e_ext) < q:
        e_ext = [0.0] * (q - len(e_ext)) + e_ext
    forecast_w = []
    for _ in range(horizon):
        value = model.intercept
        for i in range(p):
            value += model.ar_coeffs[i] * w_ext[-1 - i]
        for j in range(q):
            value += model.ma_coeffs[j] * e_ext[-1 - j]
        forecast_w.append(value)
        if p > 0:
            w_ext.append(value)
        if q > 0:
            e_ext.append(0.0)  # future innovations

    out = np.array(forecast_w)
    for tail in reversed(level_tails):
        out = tail + np.cumsum(out)
    return out


def default_order_grid() -> list[ArimaOrder]:
    """p, q in 0..3 and d in 0..2, excluding the empty (0,0,0) model."""
    grid = []
    for d in range(3):
        for p in range(4):
            for q in range(4):
                if p + q >= 1 or d >= 1:
                    grid.append(ArimaOrder(p, d, q))
    return grid


def aic(model: ArimaModel) -> float:
    """N * ln(SSE / N) + 2 * (p + q + 1), on the model's own residuals."""
    n = len(model.residuals)
    sse = float(np.sum(model.residuals**2))
    k = model.order.p + model.order.q + 1
    return n * float(np.log(max(sse / n, 1e-300))) + 2 * k


def arima_select_order(history: np.ndarray, grid: list[ArimaOrder] | None = None) -> ArimaOrder:
    """Fit every order in the grid and return the AIC minimizer."""
    if grid is None:
        grid = default_order_grid()
    if not grid:
        raise ValueError("order grid is empty")
    best: tuple[float, ArimaOrder] | None = None
    for order in grid:
        try:
            model = arima_fit(history, order)
        except (InsufficientHistoryError, np.linalg.LinAlgError):
            continue
        score = aic(model)
        if np.isfinite(score) and (best is None or score < best[0]):
            best = (score, order)
    if best is None:
        raise AllFitsFailedError("no order in the grid could be fitted on this history")
    return best[1]


class ArimaForecaster(Forecaster):
    """Rolling-refit ARIMA: the order is selected once on the training split,
    then the model is re-estimated from scratch on the trailing history at
    every forecast origin.

    Origins too early for the selected order fall back to a (0,1,0) drift
    model, and to a last-value forecast when even that cannot be estimated,
    so every origin of a rolling evaluation is covered.
    """

    name = "arima"
    input_scale = "raw"
    family = "classical"

    def __init__(self, order: ArimaOrder | None = None, grid: list[ArimaOrder] | None = None):
        self.order = order
        self.grid = grid
        self.n_fallbacks = 0

    def fit(self, train_values: np.ndarray) -> "ArimaForecaster":
        """Pick the order by AIC on the training split (no-op if pinned)."""
        if self.order is None:
            self.order = arima_select_order(np.asarray(train_values, dtype=float), self.grid)
        return self

    def predict(self, lookback, horizon, stats=None):
        if self.order is None:
            raise UnfittedModelError("call fit() (or pin an order) before predicting")
        history = np.asarray(lookback, dtype=float)
        for order in (self.order, ArimaOrder(0, 1, 0)):
            try:
                model = arima_fit(history, order)
            except InsufficientHistoryError:
                continue
            if order != self.order:
                self.n_fallbacks += 1
            return arima_forecast(model, history, horizon)
        self.n_fallbacks += 1
        return np.full(horizon, history[-1])
