"""Seed derivation for reproducible, parallel-friendly random sampling.

Every stochastic operation in the package takes an explicit integer seed and
builds its own ``numpy.random.Generator`` from it, so results are pure
functions of their arguments. Per-sample seeds are derived from a master seed
and a sample index with a splitmix64-style mix, which allows random access
(sample i can be generated without generating samples 0..i-1).
"""

from __future__ import annotations

_GOLDEN = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One splitmix64 step: map a 64-bit value to a well-mixed 64-bit value."""
    x = (x + _GOLDEN) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, *path: int) -> int:
    """Derive a child seed from ``master`` and an index path.

    Folds each path element into the state with a fixed multiplier before
    mixing, so (master, 3, 0) and (master, 0, 3) land far apart.
    """
    s = master & _MASK64
    for p in path:
        s = splitmix64((s ^ ((p & _MASK64) * _GOLDEN)) & _MASK64)
    return s
