"""numpy implementations of the compiled kernels; same signatures and results."""

import numpy as np

_NL_BLOCK = 1 << 22


def array_and_count(a, b):
    if len(a) == 0 or len(b) == 0:
        return 0
    idx = np.searchsorted(b, a)
    idx[idx == len(b)] = 0
    return int(np.count_nonzero(b[idx] == a))


def array_and(a, b):
    if len(a) == 0 or len(b) == 0:
        return np.empty(0, dtype=np.uint16)
    idx = np.searchsorted(b, a)
    idx[idx == len(b)] = 0
    return a[b[idx] == a]


def bitset_and_count(a, b):
    return int(np.bitwise_count(a & b).sum())


def bitset_and3_count(a, b, c):
    return int(np.bitwise_count(a & b & c).sum())


def array_bitset_count(a, bits):
    a = a.astype(np.uint64)
    return int(((bits[a >> np.uint64(6)] >> (a & np.uint64(63))) & np.uint64(1)).sum())


def array_bitset_and(a, bits):
    w = a.astype(np.uint64)
    keep = ((bits[w >> np.uint64(6)] >> (w & np.uint64(63))) & np.uint64(1)).astype(bool)
    return a[keep]


def nested_loop_pairs(lk, rk):
    """All (i, j) with lk[i] == rk[j], comparing block-wise."""
    nr = len(rk)
    if len(lk) == 0 or nr == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    step = max(1, _NL_BLOCK // nr)
    lis, ris = [], []
    for start in range(0, len(lk), step):
        eq = lk[start:start + step, None] == rk[None, :]
        i, j = np.nonzero(eq)
        lis.append(i + start)
        ris.append(j)
    return np.concatenate(lis).astype(np.int64), np.concatenate(ris).astype(np.int64)
