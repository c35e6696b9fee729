"""Deterministic seed derivation for parallel simulation jobs.

Every stochastic job in this package (a trajectory, a sweep cell, a
correlation trial) owns its own RNG, seeded from a 64-bit integer derived
from a single master seed plus a structured integer path. The splitting
rule is:

    child = SeedSequence(entropy=master, spawn_key=path).generate_state(1)

which is stable across processes and releases of this package, so any
job can be re-run bit-identically in isolation given (master, path).

Domain codes namespace the first path element so that, e.g., trial 3 of a
correlation run never collides with cell 3 of a current sweep.
"""

from __future__ import annotations

import numpy as np

DOMAIN_TRACE = 0
DOMAIN_TRIAL = 1
DOMAIN_SWEEP_CELL = 2
DOMAIN_PHASE = 3
DOMAIN_BASELINE = 4
DOMAIN_SCENARIO = 5


def derive_seed(master: int, *path: int) -> int:
    """Return a 64-bit child seed for the job identified by `path`."""
    if master < 0:
        raise ValueError("master seed must be non-negative")
    ss = np.random.SeedSequence(entropy=master, spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator owned by a single job."""
    return np.random.Generator(np.random.PCG64(seed))
