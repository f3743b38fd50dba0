"""Deterministic seed derivation.

All stochastic components (weight init, shuffling, data generation) draw
their seeds through `derive_seed`, so every run is a pure function of a
single master seed plus a structured label path.
"""

import hashlib


def derive_seed(*parts) -> int:
    """Hash an arbitrary label path into a 64-bit seed.

    Stable across platforms and processes (unlike `hash()`).
    """
    text = "/".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")
