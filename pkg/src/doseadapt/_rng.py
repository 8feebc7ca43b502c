"""Counter-based random streams.

Every random draw is a pure function of ``(key, stream, counter)``, so a
permutation or replicate can be regenerated in isolation and parallel
schedules cannot change results.

Two generators are used:

* SplitMix64 in counter mode inside the numba kernels (one stream per
  permutation index).
* numpy's ``Philox`` for per-replicate data generation in the simulator,
  keyed by ``(seed, replicate)``.
"""

from __future__ import annotations

import numba as nb
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

MASK64 = (1 << 64) - 1


@nb.njit(nb.uint64(nb.uint64), cache=True, inline="always")
def mix64(z):
    """SplitMix64 finalizer (a bijection on 64-bit words)."""
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(nb.uint64(nb.uint64, nb.uint64), cache=True)
def stream_seed(key, stream):
    """Seed of sub-stream ``stream`` under ``key``."""
    return mix64(key ^ mix64(stream * _GOLDEN + _GOLDEN))


@nb.njit(nb.float64(nb.uint64, nb.uint64), cache=True)
def uniform(seed, counter):
    """The ``counter``-th uniform double in [0, 1) of the stream ``seed``."""
    u = mix64(seed + (counter + np.uint64(1)) * _GOLDEN)
    return (u >> _S11) * _INV53


def as_key(seed: int) -> np.uint64:
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    return np.uint64(seed & MASK64)


def replicate_generator(seed: int, replicate: int) -> np.random.Generator:
    """Independent Philox generator for one simulation replicate."""
    key = ((seed & MASK64) << 64) | (replicate & MASK64)
    return np.random.Generator(np.random.Philox(key=key))
