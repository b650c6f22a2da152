"""Deterministic seed derivation.

Every randomized operation takes a numpy Generator. Parallel work derives one
independent child stream per scene index from a master seed, so output does
not depend on scheduling order.
"""
from __future__ import annotations

import numpy as np

# Domain codes keep child streams for different purposes independent even
# when they share a master seed and index.
DOMAIN_SCENE = 1
DOMAIN_PARTITION = 2
DOMAIN_TEXTURE = 3
DOMAIN_PROBE = 4
DOMAIN_ELASTIC = 5
DOMAIN_LAYOUT = 6
DOMAIN_AUGMENT = 7


def child_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for (master_seed, key...)."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, key)]))


def as_rng(seed_or_rng) -> np.random.Generator:
    """Accept either a seed or an existing Generator."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)
