"""Deterministic random streams derived from one 64-bit seed."""
import numpy as np


def stream(seed, *keys):
    """Return a Generator for the sub-stream addressed by ``keys``.

    Streams with different keys are statistically independent; the same
    ``(seed, keys)`` always yields the same sequence.
    """
    keys = tuple(int(k) & 0xFFFFFFFF for k in keys)
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=keys)
    return np.random.default_rng(ss)


def derive_seed(seed, *keys):
    """A fresh 64-bit integer seed for the sub-stream ``keys``."""
    return int(stream(seed, *keys).integers(0, 2**63 - 1))
