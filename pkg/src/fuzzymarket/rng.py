"""Deterministic pseudo-random generator used throughout the package.

Everything stochastic (warm-up walks, weight init, batch shuffles, task
sampling, augmentation draws) goes through `DeterministicRng`, a counter-based
SplitMix64 generator. The n-th output is a pure function of (seed, n), so
streams can be regenerated from any point and are identical across platforms
that implement IEEE-754 doubles and 64-bit unsigned arithmetic.

SplitMix64 reference: the finalizer of Vigna's splitmix64.c (public domain).
Counter form: out_n = mix64(seed + (n + 1) * GOLDEN) mod 2^64.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1

# 2^-53: maps the top 53 bits of a uint64 onto [0, 1)
_TO_UNIT = float(2.0**-53)


def _mix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer, vectorized over a uint64 array (wrapping mod 2^64)."""
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


class DeterministicRng:
    """Seeded counter-based SplitMix64 stream.

    Instances own an advancing counter; two instances with the same seed
    produce identical streams call-for-call.
    """

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {seed}")
        self._seed = np.uint64(seed & _MASK64)
        self._count = 0

    def _raw(self, count: int) -> np.ndarray:
        """Next `count` raw uint64 words."""
        idx = np.arange(self._count + 1, self._count + count + 1, dtype=np.uint64)
        self._count += count
        with np.errstate(over="ignore"):
            states = self._seed + idx * _GOLDEN
        return _mix64(states)

    def uniforms(self, count: int) -> np.ndarray:
        """`count` doubles uniform on [0, 1)."""
        return (self._raw(count) >> np.uint64(11)).astype(np.float64) * _TO_UNIT

    def uniform(self) -> float:
        return float(self.uniforms(1)[0])

    def normals(self, count: int, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        """`count` Gaussian draws via Box-Muller on consecutive uniform pairs."""
        if count == 0:
            return np.zeros(0)
        n_pairs = (count + 1) // 2
        raw = self._raw(2 * n_pairs)
        # u1 on (0, 1] so the log is finite; u2 on [0, 1)
        u1 = ((raw[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * _TO_UNIT
        u2 = (raw[1::2] >> np.uint64(11)).astype(np.float64) * _TO_UNIT
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.empty(2 * n_pairs)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        return mean + std * z[:count]

    def randint(self, n: int) -> int:
        """One integer uniform on [0, n). Modulo bias is O(n / 2^64)."""
        if n <= 0:
            raise ValueError(f"randint needs n >= 1, got {n}")
        return int(self._raw(1)[0] % np.uint64(n))

    def randints(self, count: int, n: int) -> np.ndarray:
        """`count` integers uniform on [0, n)."""
        if n <= 0:
            raise ValueError(f"randints needs n >= 1, got {n}")
        return (self._raw(count) % np.uint64(n)).astype(np.int64)

    def permutation(self, count: int) -> np.ndarray:
        """A permutation of range(count): argsort of one uniform per slot."""
        return np.argsort(self.uniforms(count), kind="stable")


def derive_seed(root: int, *parts: object) -> int:
    """Derive a child seed from a root seed and a structural key.

    Used so every cell of an experiment (model, regime, epoch, ...) gets an
    independent but reproducible stream. FNV-1a over the key parts, folded
    into the root through the SplitMix64 finalizer.
    """
    h = 0xCBF29CE484222325
    for part in parts:
        for byte in repr(part).encode():
            h = ((h ^ byte) * 0x100000001B3) & _MASK64
    mixed = _mix64(np.uint64((root ^ h) & _MASK64))
    return int(mixed)
