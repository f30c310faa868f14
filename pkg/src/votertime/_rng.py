"""Deterministic seed-stream derivation and a numba-friendly xoshiro256** core.

Replica streams are derived as SeedSequence(master_seed, spawn_key=(tag,
stream_id)) so distinct (tag, stream) pairs get non-overlapping streams
without global coordination, and the same pair always reproduces the same
event sequence.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# stable numeric tags for subcommand / purpose domains
TAGS = {
    "voter": 1,
    "dual": 2,
    "limit": 3,
    "clt": 4,
    "sweep": 5,
    "probe2d": 6,
    "mdc": 7,
    "escape": 8,
    "init": 9,
    "tree": 10,
}


def stream_state(master_seed: int, stream_id: int, tag: str = "voter") -> np.ndarray:
    """Four nonzero 64-bit words of xoshiro256** state for one stream."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(TAGS[tag], stream_id))
    state = ss.generate_state(4, np.uint64)
    if not state.any():  # all-zero state is invalid for xoshiro
        state[0] = np.uint64(0x9E3779B97F4A7C15)
    return state


def generator(master_seed: int, stream_id: int, tag: str = "voter") -> np.random.Generator:
    """numpy Generator on the same derivation tree (for non-numba code)."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(TAGS[tag], stream_id))
    return np.random.default_rng(ss)


@njit(inline="always", cache=True)
def rng_next(s):
    """xoshiro256** step; s is a uint64[4] array mutated in place."""
    x = s[1] * np.uint64(5)
    result = ((x << np.uint64(7)) | (x >> np.uint64(57))) * np.uint64(9)
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = (s[3] << np.uint64(45)) | (s[3] >> np.uint64(19))
    return result


@njit(inline="always", cache=True)
def rng_uniform(s):
    """Uniform double in (0, 1]; never returns 0 so log() is safe."""
    u = (rng_next(s) >> np.uint64(11)) + np.uint64(1)
    return float(u) * (1.0 / 9007199254740992.0)


@njit(inline="always", cache=True)
def rng_below(s, n):
    """Uniform integer in [0, n); modulo bias is negligible for n << 2^64."""
    return int(rng_next(s) % np.uint64(n))
