"""Counter-based random streams.

Every random draw in the package comes from a named (domain, tag) stream of a
master seed, so that serial, parallel, or re-ordered execution all see the
same numbers.  Streams are derived with `numpy.random.SeedSequence` spawn
keys, which hash (entropy, spawn_key) into independent PCG64 states.
"""

import numpy as np

# Stream domains.  Keep these stable: changing them changes every trace.
DOMAIN_ESTIMATOR = 1     # per-outer-iteration Gaussian directions, tag = t
DOMAIN_OUTPUT_INDEX = 2  # random-index output rule of the outer loop
DOMAIN_INIT = 3          # per-seed experiment initializations, tag unused


def stream(master_seed, domain, tag=0):
    """Generator for the (domain, tag) stream of master_seed."""
    ss = np.random.SeedSequence(entropy=int(master_seed),
                                spawn_key=(int(domain), int(tag)))
    return np.random.Generator(np.random.PCG64(ss))


def init_stream(seed):
    """Generator used to map an experiment seed to its initialization.

    Uses a single-element spawn key so the draw is independent of the
    estimator streams belonging to the same integer seed.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(DOMAIN_INIT,))
    return np.random.Generator(np.random.PCG64(ss))


def seeded_initialization(seed, low=-2.0, high=2.0, size=2):
    """Uniform initialization on [low, high]^size for an experiment seed."""
    return init_stream(seed).uniform(low, high, size=size)
