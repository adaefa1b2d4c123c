"""Deterministic RNG derivation: one root seed fans out to named streams."""

import zlib

import numpy as np


def derive_rng(seed, *tags):
    """Independent Generator for (seed, tags); stable across runs/platforms."""
    keys = [zlib.crc32(str(t).encode()) for t in tags]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed) & 0xFFFFFFFF] + keys)))


def derive_seed(seed, *tags):
    """A 32-bit child seed for components that take plain integer seeds."""
    return int(derive_rng(seed, *tags).integers(0, 2**31 - 1))
