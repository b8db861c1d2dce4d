"""Stable seed derivation.

Every sampled quantity draws from its own generator whose seed is a hash
of the parent seed and a field tag, so adding a new field never shifts the
values drawn for existing ones.
"""

import hashlib

import numpy as np


def derive_seed(seed, *tags):
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(seed)).encode())
    for tag in tags:
        h.update(b"\x00")
        h.update(str(tag).encode())
    return int.from_bytes(h.digest(), "little")


def rng_for(seed, *tags):
    return np.random.default_rng(derive_seed(seed, *tags))


def sample_seed(global_seed, index):
    """Seed of sample ``index`` in a dataset generated with ``global_seed``."""
    return derive_seed(global_seed, "sample", index)
