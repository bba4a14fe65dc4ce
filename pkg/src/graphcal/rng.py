"""Seeded random streams.

All randomness goes through Philox4x64-10, a counter-based generator keyed by
``(seed, stream)``. Independent consumers (splits, folds, initialisations,
synthetic data stages) use distinct stream ids so that adding draws in one
place never shifts another. The raw 64-bit output for a given key is pinned
in ``tests/test_rng.py``.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1

# stream ids
SPLIT = 1
FOLD = 2
INIT = 3
SYNTH_LABELS = 10
SYNTH_EDGES = 11
SYNTH_NOISE = 12
SYNTH_SAMPLE = 13


def make_rng(seed: int, stream: int = 0, sub: int = 0) -> np.random.Generator:
    """Return a Philox-backed generator for ``(seed, stream, sub)``."""
    key = np.array([seed & _MASK64, ((stream & 0xFFFFFFFF) << 32) | (sub & 0xFFFFFFFF)],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def box_muller(rng: np.random.Generator, size: int | tuple[int, ...]) -> np.ndarray:
    """Standard normal draws from uniform pairs via the Box-Muller transform."""
    n = int(np.prod(size))
    half = (n + 1) // 2
    u1 = 1.0 - rng.random(half)  # (0, 1]
    u2 = rng.random(half)
    r = np.sqrt(-2.0 * np.log(u1))
    out = np.empty(2 * half)
    out[0::2] = r * np.cos(2.0 * math.pi * u2)
    out[1::2] = r * np.sin(2.0 * math.pi * u2)
    return out[:n].reshape(size)
