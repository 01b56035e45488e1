"""Deterministic seed derivation for per-index random streams.

Cohort members, traces, and training runs each get their own
``random.Random`` stream whose seed depends only on the master seed and a
tuple of integer indices.  That keeps generation order-stable: item *i* is
identical whether items are produced serially, in parallel, or alone.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """One step of the splitmix64 mixing function (64-bit)."""
    x = (x + _GOLDEN) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, *indices: int) -> int:
    """Mix a master seed with any number of stream indices into a 64-bit seed."""
    s = splitmix64(master_seed & _MASK64)
    for i in indices:
        s = splitmix64((s ^ ((i + 1) * _GOLDEN)) & _MASK64)
    return s
