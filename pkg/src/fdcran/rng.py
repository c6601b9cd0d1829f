"""Reproducible random streams for Monte-Carlo sweeps.

All randomness flows through counter-based Philox-4x64 generators.  Streams
are keyed, not advanced: the stream for realization ``i`` is derived from
``(master_seed, i)`` with a SplitMix64 finalizer, so realizations can be
generated in any order (or in parallel) and still produce identical draws.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
# SplitMix64 increment (golden-ratio based) and finalizer constants.
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _splitmix64(x: int) -> int:
    x = (x + _GAMMA) & _MASK64
    x = ((x ^ (x >> 30)) * _MIX1) & _MASK64
    x = ((x ^ (x >> 27)) * _MIX2) & _MASK64
    return x ^ (x >> 31)


def derive_key(seed: int, *path: int) -> int:
    """Mix a master seed and an index path into a single 64-bit stream key."""
    key = _splitmix64(seed & _MASK64)
    for word in path:
        key = _splitmix64(key ^ (word & _MASK64))
    return key


def stream(seed: int, *path: int) -> np.random.Generator:
    """Return the Philox generator keyed by ``(seed, *path)``.

    Identical arguments always give an identical stream; distinct paths give
    statistically independent streams.
    """
    return np.random.Generator(np.random.Philox(key=derive_key(seed, *path)))


def complex_normal(rng: np.random.Generator, rows: int, cols: int,
                   variance: float = 1.0) -> np.ndarray:
    """i.i.d. circular complex Gaussian matrix, zero mean, per-entry variance.

    Sampled as two independent real Gaussians of variance ``variance/2``.
    """
    if variance < 0:
        raise ValueError("variance must be nonnegative")
    if variance == 0.0:
        return np.zeros((rows, cols), dtype=complex)
    scale = np.sqrt(variance / 2.0)
    re = rng.standard_normal((rows, cols))
    im = rng.standard_normal((rows, cols))
    return scale * (re + 1j * im)
