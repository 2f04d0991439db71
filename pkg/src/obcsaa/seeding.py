"""Derive independent sub-seeds from a master seed.

Every random stream is keyed by ``(master_seed, tag, round, worker)`` through
a hash, so adding a new stream never shifts the draws of an existing one.
"""
import hashlib

import numpy as np


def derive_seed(master_seed, tag, round_index=0, worker=0):
    key = f"{int(master_seed)}|{tag}|{int(round_index)}|{int(worker)}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def derive_rng(master_seed, tag, round_index=0, worker=0):
    return np.random.default_rng(derive_seed(master_seed, tag, round_index, worker))
