"""Counter-based 64-bit hashing used for every random draw in the package.

All randomness is a pure function of ``(seed, domain, counter)``: an edge slot
or a gossip step can be regenerated in isolation, which makes graph sampling
order-independent and lets a trajectory resume from ``(seed, t)`` alone.
The mixer is the SplitMix64 finalizer.
"""
from __future__ import annotations

import numba as nb
import numpy as np

M1 = np.uint64(0xBF58476D1CE4E5B9)
M2 = np.uint64(0x94D049BB133111EB)
GOLDEN = np.uint64(0x9E3779B97F4A7C15)

# stream domains, so edge sampling and gossip draws never share a counter space
DOMAIN_EDGES = 0x45444745
DOMAIN_GOSSIP = 0x474F5353
DOMAIN_OPINIONS = 0x4F50494E

_MASK64 = (1 << 64) - 1
INV_2_53 = 1.0 / 9007199254740992.0


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python int (reference implementation)."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def stream_key(seed: int, domain: int) -> np.uint64:
    """Derive the 64-bit key of one random stream from a user seed."""
    return np.uint64(mix64(mix64(int(seed) & _MASK64) ^ domain))


def derive_seed(seed: int, *path: int) -> int:
    """Child seed for a sub-task such as a trial or a grid point."""
    h = int(seed) & _MASK64
    for p in path:
        h = mix64(h ^ mix64((int(p) + 1) * 0x9E3779B97F4A7C15))
    return h


@nb.njit(inline="always")
def mix(z):
    z = (z ^ (z >> np.uint64(30))) * M1
    z = (z ^ (z >> np.uint64(27))) * M2
    return z ^ (z >> np.uint64(31))


@nb.njit(inline="always")
def counter_uniform(key, counter):
    """Uniform double in [0, 1) for position ``counter`` of stream ``key``."""
    h = mix(key + np.uint64(counter) * GOLDEN)
    return np.float64(h >> np.uint64(11)) * INV_2_53


def hash_stream(key: np.uint64, offset: int, count: int) -> np.ndarray:
    """Raw 64-bit outputs at positions ``offset .. offset+count-1`` of a stream."""
    c = np.arange(offset, offset + count, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = key + c * GOLDEN
        z = (z ^ (z >> np.uint64(30))) * M1
        z = (z ^ (z >> np.uint64(27))) * M2
        return z ^ (z >> np.uint64(31))


def uniforms(seed: int, domain: int, count: int, offset: int = 0) -> np.ndarray:
    """Vector of ``count`` uniforms in [0, 1) from the stream of ``(seed, domain)``."""
    h = hash_stream(stream_key(seed, domain), offset, count)
    return (h >> np.uint64(11)).astype(np.float64) * INV_2_53
