"""Synthetic price-series generation from a fuzzy excess-demand rule.

One trading heuristic drives the market: the log-ratio of a short to a long
moving average of the price is scored by seven fuzzy rules, their weighted
consequent is the excess demand, and the next log-price moves by
influence * demand. A seeded random walk warms the series up; everything
after the warm-up is deterministic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .rng import DeterministicRng

# math.exp overflows just above 709; stay clear on both sides so prices
# remain strictly positive and finite.
_LOG_PRICE_LIMIT = 700.0


class DegenerateMembershipError(ValueError):
    """Total membership underflowed to zero: the rule set does not cover the
    signal value it was asked to score."""


@dataclass(frozen=True, eq=False)
class FuzzyRuleSet:
    """Seven fuzzy rules: Gaussian memberships plus consequent demands.

    `centers` place the rules along the signal axis, `widths` are the Gaussian
    spreads, `consequents` the demand each rule votes for.
    """

    centers: np.ndarray
    widths: np.ndarray
    consequents: np.ndarray

    def __eq__(self, other) -> bool:
        if not isinstance(other, FuzzyRuleSet):
            return NotImplemented
        return (
            np.array_equal(self.centers, other.centers)
            and np.array_equal(self.widths, other.widths)
            and np.array_equal(self.consequents, other.consequents)
        )

    def __post_init__(self):
        object.__setattr__(self, "centers", np.asarray(self.centers, dtype=float))
        object.__setattr__(self, "widths", np.asarray(self.widths, dtype=float))
        object.__setattr__(self, "consequents", np.asarray(self.consequents, dtype=float))
        for name in ("centers", "widths", "consequents"):
            if getattr(self, name).shape != (7,):
                raise ValueError(f"{name} must have exactly 7 entries")
        if not np.all(self.widths > 0):
            raise ValueError("all widths must be strictly positive")
        if not np.all(np.diff(self.centers) > 0):
            raise ValueError("centers must be strictly increasing")

    @classmethod
    def default(cls, span: float = 0.05, demand_scale: float = 1.0) -> "FuzzyRuleSet":
        """Default rule set: centers evenly spaced on [-span, span], uniform
        width span/3, consequents (-3..3) * demand_scale. Antisymmetric, so a
        flat signal produces zero demand."""
        return cls(
            centers=np.linspace(-span, span, 7),
            widths=np.full(7, span / 3.0),
            consequents=np.arange(-3, 4, dtype=float) * demand_scale,
        )

    def membership(self, x: float) -> np.ndarray:
        """Gaussian membership of signal value x in each of the 7 rules."""
        z = (x - self.centers) / self.widths
        return np.exp(-0.5 * z * z)

    def to_dict(self) -> dict:
        return {
            "centers": self.centers.tolist(),
            "widths": self.widths.tolist(),
            "consequents": self.consequents.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FuzzyRuleSet":
        return cls(d["centers"], d["widths"], d["consequents"])


@dataclass(frozen=True)
class GeneratorConfig:
    """Parameters of the single-heuristic market simulator.

    m/n are the short/long moving-average lengths, `influence` the constant
    weight applied to the demand signal each step. The warm-up is a seeded
    random walk of `init_steps` prices starting at `init_price` with
    log-return std `init_vol`.
    """

    m: int = 1
    n: int = 5
    influence: float = 0.01
    rules: FuzzyRuleSet = field(default_factory=FuzzyRuleSet.default)
    init_steps: int = 100
    init_price: float = 100.0
    init_vol: float = 0.01
    series_len: int = 500

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError("moving-average lengths must be >= 1")
        if self.m >= self.n:
            raise ValueError(f"m < n required, got m={self.m}, n={self.n}")
        if self.init_steps < self.n:
            raise ValueError(
                f"init_steps must cover the long moving average: {self.init_steps} < {self.n}"
            )
        if self.series_len < 1:
            raise ValueError("series_len must be >= 1")
        if self.init_price <= 0:
            raise ValueError("init_price must be positive")
        if self.init_vol < 0:
            raise ValueError("init_vol must be non-negative")

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "n": self.n,
            "influence": self.influence,
            "rules": self.rules.to_dict(),
            "init_steps": self.init_steps,
            "init_price": self.init_price,
            "init_vol": self.init_vol,
            "series_len": self.series_len,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        d = dict(d)
        if "rules" in d and isinstance(d["rules"], dict):
            d["rules"] = FuzzyRuleSet.from_dict(d["rules"])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class PriceSeries:
    """A generated price path plus the provenance needed to regenerate it."""

    id: str
    seed: int
    prices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "prices", np.asarray(self.prices, dtype=float))
        if not np.all(self.prices > 0):
            raise ValueError(f"series {self.id}: all prices must be strictly positive")

    def __len__(self) -> int:
        return len(self.prices)


def moving_average(prices: Sequence[float], n: int, t: int) -> float:
    """Trailing mean of prices[t-n+1 .. t]."""
    if n < 1:
        raise ValueError(f"moving-average length must be >= 1, got {n}")
    if t < n - 1:
        raise IndexError(f"t={t} has no length-{n} trailing window")
    if t >= len(prices):
        raise IndexError(f"t={t} out of range for series of length {len(prices)}")
    window = prices[t - n + 1 : t + 1]
    return float(sum(window) / n)


def log_ma_ratio(prices: Sequence[float], m: int, n: int, t: int) -> float:
    """ln of the ratio of the length-m to the length-n trailing mean at t."""
    if m >= n:
        raise ValueError(f"m < n required, got m={m}, n={n}")
    if any(p <= 0 for p in prices[max(0, t - n + 1) : t + 1]):
        raise ValueError("prices in the moving-average window must be positive")
    return math.log(moving_average(prices, m, t) / moving_average(prices, n, t))


def excess_demand(rules: FuzzyRuleSet, x: float) -> float:
    """Membership-weighted average of the rule consequents at signal x.

    Always lies in [min(consequents), max(consequents)].
    """
    w = rules.membership(x)
    total = float(w.sum())
    if total <= 0.0 or not math.isfinite(total):
        raise DegenerateMembershipError(
            f"rule memberships underflowed at x={x}; the rule set does not "
            "cover the observed signal range"
        )
    return float(np.dot(rules.consequents, w) / total)


def step_price(p_t: float, ed: float, influence: float) -> float:
    """Next price: exp(ln(p_t) + influence * ed).

    Computed as p_t * exp(influence * ed), the float form that keeps the
    zero-demand and zero-influence fixed points exact.
    """
    if p_t <= 0:
        raise ValueError(f"price must be positive, got {p_t}")
    z = math.log(p_t) + influence * ed
    if not -_LOG_PRICE_LIMIT < z < _LOG_PRICE_LIMIT:
        raise OverflowError(
            f"log-price {z} out of range; influence={influence} and demand={ed} "
            "are misconfigured for this price scale"
        )
    return p_t * math.exp(influence * ed)


def random_walk_init(seed: int, steps: int, init_price: float, init_vol: float) -> list[float]:
    """Seeded warm-up: a Gaussian random walk in log-price, `steps` prices
    long, starting at init_price."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if init_price <= 0:
        raise ValueError("init_price must be positive")
    increments = DeterministicRng(seed).normals(steps - 1, 0.0, init_vol)
    prices = [init_price]
    for eps in increments:
        prices.append(prices[-1] * math.exp(eps))
    return prices


def generate_full_path(config: GeneratorConfig, seed: int) -> list[float]:
    """Warm-up plus generated segment, as one list of prices.

    The generated segment applies the fuzzy transition step by step; the
    warm-up tail feeds the first moving averages.
    """
    prices = random_walk_init(seed, config.init_steps, config.init_price, config.init_vol)
    for _ in range(config.series_len):
        t = len(prices) - 1
        x = log_ma_ratio(prices, config.m, config.n, t)
        ed = excess_demand(config.rules, x)
        prices.append(step_price(prices[-1], ed, config.influence))
    return prices


def generate_series(config: GeneratorConfig, seed: int, id: str) -> PriceSeries:
    """One synthetic series: the post-warm-up segment of length series_len."""
    path = generate_full_path(config, seed)
    return PriceSeries(id=id, seed=seed, prices=np.array(path[config.init_steps :]))


def generate_corpus(config: GeneratorConfig, count: int, base_seed: int) -> list[PriceSeries]:
    """`count` series seeded base_seed, base_seed+1, ... with ids syn-000, ..."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return [
        generate_series(config, base_seed + i, f"syn-{i:03d}") for i in range(count)
    ]


def export_corpus(
    corpus: list[PriceSeries],
    config: GeneratorConfig,
    base_seed: int,
    out_dir: str | Path,
    default_rules: bool | None = None,
    provenance: dict | None = None,
) -> Path:
    """Write one `t,price` CSV per series plus a manifest that pins the full
    config, count and base seed. Reruns with equal inputs are byte-identical.

    Returns the manifest path. `default_rules` flags whether the rule set is
    the package stand-in rather than calibrated parameters; autodetected when
    not given. `provenance` (e.g. experiment config hash and root seed) is
    merged into the manifest.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for series in corpus:
        filename = f"{series.id}.csv"
        lines = ["t,price"]
        lines += [f"{t},{float(price)!r}" for t, price in enumerate(series.prices)]
        (out / filename).write_text("\n".join(lines) + "\n")
        entries.append({"id": series.id, "seed": series.seed, "file": filename})
    if default_rules is None:
        default_rules = _is_default_rule_set(config.rules)
    manifest = {
        "generator": config.to_dict(),
        "count": len(corpus),
        "base_seed": base_seed,
        "rules_are_package_defaults": default_rules,
        "series": entries,
    }
    if provenance:
        manifest.update(provenance)
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


def _is_default_rule_set(rules: FuzzyRuleSet) -> bool:
    ref = FuzzyRuleSet.default()
    return (
        np.array_equal(rules.centers, ref.centers)
        and np.array_equal(rules.widths, ref.widths)
        and np.array_equal(rules.consequents, ref.consequents)
    )
