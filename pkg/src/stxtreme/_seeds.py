"""Seed handling shared by the Monte Carlo routines."""

import numpy as np


def seed_sequence(seed) -> np.random.SeedSequence:
    """Accept None, an int or an existing SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)
