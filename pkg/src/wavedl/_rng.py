"""Labeled sub-seed derivation from one master seed."""
import hashlib

import numpy as np


def derive_rng(seed, label):
    """Return a Generator seeded by ``(seed, label)``.

    The label is hashed, so ``derive_rng(7, "medium")`` and
    ``derive_rng(7, "sources")`` are independent streams that do not shift
    when other components draw more or fewer numbers.
    """
    digest = hashlib.sha256(str(label).encode("utf-8")).digest()
    words = np.frombuffer(digest[:16], dtype=np.uint32)
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(seed) >> 32, *map(int, words)])
    return np.random.default_rng(ss)
