"""Self-describing JSON checkpoints for fitted models.

One document holds the model kind, its sizes/coefficients, optional optimizer
state, and the config hash that produced it. Floats are serialized through
JSON's repr round-trip, so save/load is bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .arima import ArimaModel, ArimaOrder
from .mlp import Adam, MlpModel


def _optimizer_state(optimizer: Adam | None) -> dict | None:
    if optimizer is None:
        return None
    return {
        "type": "adam",
        "lr": optimizer.lr,
        "beta1": optimizer.beta1,
        "beta2": optimizer.beta2,
        "eps": optimizer.eps,
        "t": optimizer._t,
        "m": None if optimizer._m is None else optimizer._m.tolist(),
        "v": None if optimizer._v is None else optimizer._v.tolist(),
    }


def _restore_optimizer(state: dict | None) -> Adam | None:
    if state is None:
        return None
    opt = Adam(lr=state["lr"], beta1=state["beta1"], beta2=state["beta2"], eps=state["eps"])
    opt._t = state["t"]
    opt._m = None if state["m"] is None else np.array(state["m"])
    opt._v = None if state["v"] is None else np.array(state["v"])
    return opt


def save_checkpoint(
    path: str | Path,
    model: MlpModel | ArimaModel,
    optimizer: Adam | None = None,
    config_hash: str = "",
) -> None:
    if isinstance(model, MlpModel):
        doc = {
            "kind": "mlp",
            "layer_sizes": model.layer_sizes,
            "activation": model.activation,
            "weights": [w.tolist() for w in model.weights],
            "biases": [b.tolist() for b in model.biases],
        }
    elif isinstance(model, ArimaModel):
        doc = {
            "kind": "arima",
            "order": [model.order.p, model.order.d, model.order.q],
            "ar_coeffs": model.ar_coeffs.tolist(),
            "ma_coeffs": model.ma_coeffs.tolist(),
            "intercept": model.intercept,
            "residuals": model.residuals.tolist(),
            "shrink_count": model.shrink_count,
            "fitted": model.fitted,
        }
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    doc["config_hash"] = config_hash
    doc["optimizer"] = _optimizer_state(optimizer)
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_checkpoint(path: str | Path) -> dict:
    """Returns {"model": ..., "optimizer": Adam | None, "config_hash": str}."""
    doc = json.loads(Path(path).read_text())
    if doc["kind"] == "mlp":
        model = MlpModel(
            layer_sizes=doc["layer_sizes"],
            activation=doc["activation"],
            weights=[np.array(w) for w in doc["weights"]],
            biases=[np.array(b) for b in doc["biases"]],
        )
    elif doc["kind"] == "arima":
        model = ArimaModel(
            order=ArimaOrder(*doc["order"]),
            ar_coeffs=np.array(doc["ar_coeffs"]),
            ma_coeffs=np.array(doc["ma_coeffs"]),
            intercept=doc["intercept"],
            residuals=np.array(doc["residuals"]),
            shrink_count=doc["shrink_count"],
            fitted=doc["fitted"],
        )
    else:
        raise ValueError(f"unknown checkpoint kind {doc['kind']!r}")
    return {
        "model": model,
        "optimizer": _restore_optimizer(doc["optimizer"]),
        "config_hash": doc["config_hash"],
    }
