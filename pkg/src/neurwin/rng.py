"""Seeded random streams.

Every source of randomness in the package goes through :func:`make_rng`.
Streams are numpy ``PCG64`` generators keyed by a ``SeedSequence`` built
from ``(base_seed, *stream_id)``; both algorithms are fixed and documented
by numpy, so a given key reproduces the same draws on every platform.

Stream ids used across the package (the first element is a string tag
hashed to an integer so that ids never collide between subsystems):

* ``("minibatch", b)``            -- s0/s1 draws of mini-batch ``b``
* ``("exo", b)``                  -- exogenous events shared by a mini-batch
* ``("action", b, e)``            -- action sampling of episode ``e``
* ``("run", r)``                  -- evaluation run ``r``
"""

from __future__ import annotations

import math
import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _component(x) -> int:
    if isinstance(x, str):
        return zlib.crc32(x.encode("utf-8"))
    x = int(x)
    if x < 0:
        raise ValueError(f"stream id components must be non-negative, got {x}")
    return x


def stream_key(seed: int, *stream_id) -> tuple[int, tuple[int, ...]]:
    seed = int(seed)
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return seed & _MASK64, tuple(_component(s) for s in stream_id)


def make_rng(seed: int, *stream_id) -> np.random.Generator:
    """Return an independent generator for ``(seed, *stream_id)``."""
    entropy, spawn_key = stream_key(seed, *stream_id)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy, spawn_key=spawn_key)))


def derive_seed(seed: int, *stream_id) -> int:
    """A 63-bit integer seed derived from ``(seed, *stream_id)``."""
    entropy, spawn_key = stream_key(seed, *stream_id)
    state = np.random.SeedSequence(entropy, spawn_key=spawn_key).generate_state(2, np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def hashed_normal(seed: int, key: tuple[int, ...]) -> float:
    """Standard normal that is a pure function of ``(seed, key)``.

    SplitMix64 folds the key into two 53-bit uniforms which go through
    Box-Muller. Used where a draw must not depend on visiting order.
    """
    h = splitmix64(int(seed) & _MASK64)
    for k in key:
        h = splitmix64(h ^ (int(k) & _MASK64))
    h2 = splitmix64(h)
    u1 = ((h >> 11) + 1) / 9007199254740993.0  # (0, 1]
    u2 = (h2 >> 11) / 9007199254740992.0
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
