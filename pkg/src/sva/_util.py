"""Seed derivation helpers.

Every stochastic component takes an explicit integer seed and derives
sub-seeds through splitmix64 so that runs are bit-reproducible and
independent streams never share state.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1


def splitmix64(value: int) -> int:
    """One splitmix64 mixing step; maps any int to a well-spread 64-bit int."""
    z = (value + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def mix_seed(*parts: int) -> int:
    """Fold integers into a single 64-bit seed, order-sensitively."""
    acc = 0
    for part in parts:
        acc = splitmix64(acc ^ (int(part) & MASK64))
    return acc
