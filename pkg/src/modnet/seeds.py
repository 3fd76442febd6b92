"""Deterministic derivation of per-worker seeds from one master seed.

splitmix64 finalizer over a fixed-increment counter: well mixed, cheap, and
stable across platforms, so chain i always gets the same generator no matter
how many chains run or in what order.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    z &= _MASK
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & _MASK
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _MASK
    z ^= z >> 31
    return z


def derive_seed(master: int, index: int) -> int:
    """Seed for stream `index` under `master`; 64-bit, collision-resistant."""
    if index < 0:
        raise ValueError("stream index must be nonnegative")
    return _mix((master + (index + 1) * _GOLDEN) & _MASK)
