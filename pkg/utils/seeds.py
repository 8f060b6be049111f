"""Master-seed derivation.

Every random stream in a run comes from ``derive_seed(master_seed, role)``:
the decimal seed and the role string are joined with ':' and hashed with
BLAKE2b (8-byte digest, big-endian) into an unsigned 64-bit sub-seed.
"""
import hashlib

import numpy as np


def derive_seed(master_seed, role):
    seed_text = f'{int(master_seed)}:{role}'.encode('utf-8')
    digest = hashlib.blake2b(seed_text, digest_size=8).digest()
    return int.from_bytes(digest, 'big')


def derived_rng(master_seed, role):
    return np.random.default_rng(derive_seed(master_seed, role))


def repeat_seeds(master_seed, role, repeats):
    return [derive_seed(master_seed, f'{role}/{repeat_index}') for repeat_index in range(repeats)]
