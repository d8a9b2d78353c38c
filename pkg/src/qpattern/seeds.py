"""Deterministic seed derivation.

Every stochastic call gets its own seed hashed from a master seed and a tuple
of labels, so results never depend on call order or worker scheduling.
"""

import hashlib


def derive_seed(*parts) -> int:
    text = "\x1f".join(repr(p) for p in parts)
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little")
