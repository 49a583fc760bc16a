"""Counter-style random streams keyed by integer tuples.

Every stochastic stage draws from a stream derived from ``(seed, *keys)``,
so results depend only on the keys and never on call order across workers.
"""

import numpy as np


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Return an independent Philox generator for ``(seed, *keys)``."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(seed: int, *keys: int) -> int:
    """A 32-bit integer seed for a sub-task keyed by ``(seed, *keys)``."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) for k in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint32)[0])
