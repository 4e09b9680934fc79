"""Seeded random streams.

All randomness goes through :class:`numpy.random.Generator` backed by PCG64
(O'Neill's permuted congruential generator, 128-bit state, XSL-RR output).
Its output stream is fixed by numpy's stability policy, so a seed produces the
same numbers on every platform.

Per-component substreams are derived from a master seed by hashing
``(master_seed, component)`` with BLAKE2b to a 64-bit integer.  Adding or
removing draws in one component therefore never shifts another's stream.
"""

import hashlib

import numpy as np


def hash64(master_seed: int, component: str) -> int:
    payload = f"{int(master_seed)}/{component}".encode()
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def substream(master_seed: int, component: str) -> np.random.Generator:
    """Generator for one named component of a run (``"env"``, ``"agents"``, ...)."""
    return make_rng(hash64(master_seed, component))
