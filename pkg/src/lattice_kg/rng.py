"""Counter-based splitmix64 stream.

Output ``i`` (0-based) of seed ``s`` is the splitmix64 finalizer applied to
``s + (i + 1) * 0x9E3779B97F4A7C15`` (mod 2^64), which matches the usual
sequential splitmix64 generator and is easy to reproduce in other languages.
"""
from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)


def splitmix64(seed, count, offset=0):
    i = np.arange(offset + 1, offset + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed % 2**64) + i * GOLDEN
        z = (z ^ (z >> np.uint64(30))) * MIX1
        z = (z ^ (z >> np.uint64(27))) * MIX2
    return z ^ (z >> np.uint64(31))


def uniform(seed, count, offset=0):
    """Doubles in ``[0, 1)`` from the top 53 bits."""
    return (splitmix64(seed, count, offset) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def standard_normal(seed, count, offset=0):
    """Box-Muller pairs; consumes ``2 * ceil(count / 2)`` raw outputs."""
    pairs = (count + 1) // 2
    u = uniform(seed, 2 * pairs, offset)
    u1, u2 = 1.0 - u[0::2], u[1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * pairs)
    z[0::2] = r * np.cos(2.0 * np.pi * u2)
    z[1::2] = r * np.sin(2.0 * np.pi * u2)
    return z[:count]
