"""Deterministic stream derivation.

All randomness in the library flows from integer seeds through the
helpers below. Child streams are built with the counter-based Philox
generator: the master seed becomes the Philox key and the derivation
path (for example ``(TREE, index)``) is placed in the high words of the
counter. Distinct paths therefore yield statistically independent
streams, and a stream depends only on ``(master_seed, path)``, never on
scheduling order or worker count.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# Stream kinds. Values are arbitrary but frozen; changing them changes
# every derived stream and breaks replayability of stored seeds.
TREE = 1
PERMUTATION = 2
HOLDOUT = 3
STABILITY = 4
BOOTSTRAP_CI = 5
GENERATOR = 6


def child_rng(master_seed: int, kind: int, *path: int) -> np.random.Generator:
    """Return the child generator for ``(master_seed, kind, *path)``.

    Up to two path components are supported, which covers every use in
    the library (tree index, or feature index plus repeat index).
    """
    if len(path) > 2:
        raise ValueError("at most two path components are supported")
    a = path[0] if len(path) > 0 else 0
    b = path[1] if len(path) > 1 else 0
    counter = [0, b & _MASK64, a & _MASK64, kind & _MASK64]
    bitgen = np.random.Philox(key=master_seed & _MASK64, counter=counter)
    return np.random.Generator(bitgen)


def derive_seed(master_seed: int, kind: int, *path: int) -> int:
    """Collapse a derivation path to a plain 63-bit integer seed.

    Used where an API needs a seed value rather than a stream, for
    example the per-run master seeds of stability selection.
    """
    return int(child_rng(master_seed, kind, *path).integers(0, 1 << 63))
