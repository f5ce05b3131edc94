"""Deterministic seed derivation helpers.

All randomness in the package flows through numpy Generators built from
SeedSequence objects, so every derived stream is a pure function of the
user-facing integer seed plus a structural key (chain index, replicate
index, role).
"""

from __future__ import annotations

import numpy as np


def derive_seed(*keys: int) -> int:
    """Collapse a tuple of integer keys into a stable 64-bit seed."""
    words = np.random.SeedSequence([int(k) for k in keys]).generate_state(2)
    return (int(words[0]) << 32) | int(words[1])


def generator_for(seed: int, *spawn_key: int) -> np.random.Generator:
    """PCG64 generator for `seed`, optionally namespaced by a spawn key."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(spawn_key))
    return np.random.Generator(np.random.PCG64(ss))
