"""Deterministic RNG derivation from composite keys.

Every source of randomness in the toolkit derives its generator from a
tuple key (user seed plus structural indices such as class id or query
index), so results never depend on evaluation order, block sizes, or
thread counts. Key components are masked to unsigned 64-bit because
numpy's SeedSequence rejects negative entropy.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def _key(parts) -> tuple[int, ...]:
    return tuple(int(p) & _MASK64 for p in parts)


def derive_rng(*parts) -> np.random.Generator:
    """A generator keyed by the given integers."""
    return np.random.default_rng(_key(parts))


def derive_seed(*parts) -> int:
    """A single integer seed keyed by the given integers."""
    ss = np.random.SeedSequence(_key(parts))
    return int(ss.generate_state(1, np.uint64)[0])
