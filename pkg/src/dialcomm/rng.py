"""Independent, reproducible random streams keyed by (run seed, stream name)."""
import zlib

import numpy as np


def stream(seed: int, name: str) -> np.random.Generator:
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(key,))))


def gumbel(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard Gumbel draws by inverse transform on u in the open interval (0, 1)."""
    u = rng.random(shape)
    zero = u == 0.0
    while zero.any():
        u[zero] = rng.random(int(zero.sum()))
        zero = u == 0.0
    return -np.log(-np.log(u))
