"""Named random streams derived from one root seed.

Every source of randomness in a run is keyed by the root seed plus a
path of names (component, agent id, date, ...). Equal paths give equal
streams on every platform, so ablation variants of the same run are
paired-sample comparable.
"""

from __future__ import annotations

import hashlib

import numpy as np


def child_seed(root: int, *names: object) -> int:
    """Derive a 64-bit seed from a root seed and a name path."""
    h = hashlib.sha256()
    h.update(str(int(root)).encode())
    for name in names:
        h.update(b"/")
        h.update(str(name).encode())
    return int.from_bytes(h.digest()[:8], "big")


def stream(root: int, *names: object) -> np.random.Generator:
    """A fresh generator for the named stream."""
    return np.random.default_rng(child_seed(root, *names))
