"""Counter-based seed derivation.

Every random draw in the package comes from a ``numpy.random.Generator``
backed by Philox, keyed by a ``SeedSequence`` whose spawn key is the
position of the work item (trial index, client index, ...).  A trial's
stream therefore depends only on ``(base_seed, trial)`` and never on the
order in which workers pick trials up.
"""

from __future__ import annotations

import numpy as np


def derive_seed(base_seed: int, *indices: int) -> np.random.SeedSequence:
    """Return the seed sequence for work item ``indices`` under ``base_seed``."""
    if base_seed < 0:
        raise ValueError("base_seed must be non-negative")
    return np.random.SeedSequence(int(base_seed), spawn_key=tuple(int(i) for i in indices))


def make_rng(seed=None) -> np.random.Generator:
    """Build a Philox generator from an int, a SeedSequence, or pass a Generator through."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        seed = 0
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(seed))
