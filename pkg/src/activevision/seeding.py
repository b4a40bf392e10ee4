"""Named random streams derived from one master seed.

Each component draws from its own generator, so changing how much
randomness one part consumes never shifts another part's sequence.
"""

import numpy as np

STREAMS = {
    "env": 1,
    "weights": 2,
    "buffer": 3,
    "eval": 4,
    "explore": 5,
    "noise": 6,
    "selftest": 7,
}

MAX_SEED = 2 ** 64 - 1


def check_seed(seed):
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def stream(seed, name, *extra):
    """Generator for stream ``name``; ``extra`` integers split it further (e.g. per level)."""
    return np.random.default_rng([check_seed(seed), STREAMS[name], *[int(e) for e in extra]])


def stream_seed(seed, name, *extra):
    """A plain integer seed for APIs that want one (e.g. an environment reset)."""
    return int(stream(seed, name, *extra).integers(2 ** 63))
