"""Deterministic random number generation.

All randomness in a run flows from a single 64-bit seed. Independent
substreams are derived by hashing the seed together with a label path, so
scenario components can draw without coupling to each other's consumption
order. Philox is counter-based, which keeps runs bit-reproducible across
platforms.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_key(seed: int, *labels: object) -> int:
    """Derive a 64-bit substream key from a seed and a label path."""
    material = ("%d/" % seed + "/".join(str(x) for x in labels)).encode()
    return int.from_bytes(hashlib.sha256(material).digest()[:8], "big")


def make_rng(seed: int, *labels: object) -> np.random.Generator:
    """Create a deterministic generator for the given seed and substream labels."""
    return np.random.Generator(np.random.Philox(key=derive_key(seed, *labels)))
