"""Keyed random substreams.

Every stochastic quantity is drawn from a generator whose seed is the root
seed plus an integer key path, so results do not depend on evaluation order
or on how work is split between workers.
"""

import numpy as np

# key tags used below the replicate level
DATA = 0
CHAIN = 1
THETA = 2
AUX = 3


def as_seed_sequence(random_state=None):
    """Normalise ``random_state`` into a :class:`numpy.random.SeedSequence`.

    Accepts ``None`` (fresh OS entropy), an int, a SeedSequence or a
    Generator. A Generator is consumed to produce the entropy, so passing the
    same Generator twice gives different streams.
    """
    if isinstance(random_state, np.random.SeedSequence):
        return random_state
    if isinstance(random_state, np.random.Generator):
        return np.random.SeedSequence(random_state.integers(0, 2**63, size=4).tolist())
    if random_state is None:
        return np.random.SeedSequence()
    if isinstance(random_state, (int, np.integer)):
        if random_state < 0:
            raise ValueError("seed must be non-negative")
        return np.random.SeedSequence(int(random_state))
    raise TypeError(f"cannot build a seed sequence from {type(random_state).__name__}")


def substream(ss, *key):
    return np.random.SeedSequence(
        ss.entropy, spawn_key=tuple(ss.spawn_key) + tuple(int(k) for k in key), pool_size=ss.pool_size
    )


def generator(ss, *key):
    return np.random.Generator(np.random.PCG64(substream(ss, *key)))


def as_generator(random_state=None):
    if isinstance(random_state, np.random.Generator):
        return random_state
    return np.random.Generator(np.random.PCG64(as_seed_sequence(random_state)))
