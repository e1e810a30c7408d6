import numpy as np


def seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def substream(seed, *keys: int) -> np.random.Generator:
    """Generator for the child of ``seed`` at ``keys``.

    Unlike ``SeedSequence.spawn`` this has no side effects, so the same
    (seed, keys) pair always yields the same stream.
    """
    base = seed_sequence(seed)
    child = np.random.SeedSequence(
        entropy=base.entropy, spawn_key=tuple(base.spawn_key) + tuple(int(k) for k in keys)
    )
    return np.random.Generator(np.random.PCG64(child))


def child_seed(seed, *keys: int) -> np.random.SeedSequence:
    base = seed_sequence(seed)
    return np.random.SeedSequence(
        entropy=base.entropy, spawn_key=tuple(base.spawn_key) + tuple(int(k) for k in keys)
    )
