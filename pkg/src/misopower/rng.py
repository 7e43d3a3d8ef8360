"""Named random substreams.

Every consumer of randomness asks for a generator keyed by
``(seed, purpose, *keys)``, so scenario generation, solver-side draws and
Monte Carlo validation never share a stream.
"""

import zlib

import numpy as np


def purpose_key(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def substream(seed: int, purpose: str, *keys: int) -> np.random.Generator:
    seq = np.random.SeedSequence(
        entropy=int(seed), spawn_key=(purpose_key(purpose),) + tuple(int(k) for k in keys)
    )
    return np.random.Generator(np.random.PCG64(seq))


def complex_normal(rng: np.random.Generator, shape, variance=1.0) -> np.ndarray:
    """Circularly symmetric complex Gaussian draws; each of re/im has variance/2."""
    scale = np.sqrt(np.asarray(variance, dtype=float) / 2.0)
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return scale * z
