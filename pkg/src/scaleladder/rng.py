"""Seeded random substreams.

Every stochastic stage of the pipeline draws from its own PCG64 substream,
derived from the experiment seed and a fixed purpose code. Substreams are
independent of each other and of thread count, so runs are reproducible
byte-for-byte no matter which stages execute or in what order.

Splitting rule: ``SeedSequence(entropy=seed, spawn_key=(PURPOSE[purpose], index))``.
``index`` separates repeated uses of one purpose (e.g. one stream per
training level, or per Monte Carlo trial).
"""

from __future__ import annotations

import numpy as np

PURPOSES = {
    "sampling": 0,    # data instance generation
    "training": 1,    # Gibbs level draws (index = level)
    "evaluation": 2,  # Monte Carlo risk estimation
    "teacher": 3,     # planted-teacher weight selection
}


def substream(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    """Return the deterministic generator for (seed, purpose, index)."""
    if purpose not in PURPOSES:
        raise ValueError(f"unknown RNG purpose {purpose!r}; expected one of {sorted(PURPOSES)}")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(PURPOSES[purpose], index))
    return np.random.default_rng(ss)
