"""Deterministic seed derivation shared by the aggregation loop and the harness."""

import numpy as np


def derive_seed(master_seed, *key):
    """Map ``(master_seed, *key)`` to a 63-bit child seed.

    Uses numpy's ``SeedSequence`` hashing, so children of distinct keys are
    statistically independent and the mapping never changes between runs.
    """
    if master_seed < 0 or any(k < 0 for k in key):
        raise ValueError("seeds and keys must be non-negative integers")
    words = np.random.SeedSequence([int(master_seed), *map(int, key)]).generate_state(2)
    return (int(words[0]) << 31) ^ int(words[1])
