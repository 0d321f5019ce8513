"""Seed derivation: every random stream comes from (top-level seed, task labels)."""
import hashlib

import numpy as np


def derive_seed(seed: int, *labels) -> int:
    """Deterministic 63-bit child seed for ``labels`` under ``seed``.

    Labels are hashed with blake2b (``hash()`` is salted per process), so
    the result is independent of execution order and interpreter run.
    """
    digest = hashlib.blake2b("/".join(map(str, labels)).encode(), digest_size=8).digest()
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int.from_bytes(digest, "little")])
    return int(ss.generate_state(2, dtype=np.uint32) @ np.array([1, 1 << 32], dtype=object)) >> 1
