"""Order-independent seeding for Monte Carlo replicates."""
import struct

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _as_key(value) -> int:
    if isinstance(value, float):
        return struct.unpack("<Q", struct.pack("<d", value))[0]
    if isinstance(value, str):
        key = 0
        for ch in value.encode():
            key = splitmix64(key ^ ch)
        return key
    return int(value) & _MASK


def derive_seed(master: int, *keys) -> int:
    """Hash a master seed and any number of int/float/str keys into a 64-bit seed."""
    h = splitmix64(int(master) & _MASK)
    for key in keys:
        h = splitmix64(h ^ _as_key(key))
    return h


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))
