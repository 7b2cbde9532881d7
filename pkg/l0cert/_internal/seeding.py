import numpy as np

DEFAULT_SEED = 42


def derive_seed(seed: int, *key: int) -> int:
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=tuple(key))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])
