import hashlib
import math

import numpy as np


def stable_seed(*parts):
    """64-bit seed derived from ``parts``; independent of PYTHONHASHSEED."""
    h = hashlib.blake2b(repr(parts).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def rng_for(*parts):
    return np.random.default_rng(stable_seed(*parts))


def sort_work(n):
    """Virtual tuples charged for sorting ``n`` rows: n * ceil(log2 n)."""
    n = float(n)
    if n <= 1.0:
        return 0.0
    return n * math.ceil(math.log2(n))
