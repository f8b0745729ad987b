"""Container-partitioned compressed bitmap over 32-bit unsigned ids.

Ids are split on their high 16 bits. Each chunk is held either as a sorted
``uint16`` array (at most 4096 members) or as a 1024-word ``uint64`` bitset.
"""

from __future__ import annotations

import numpy as np

from . import kernels

ARRAY_MAX = 4096
_WORDS = 1024
_U64_ONE = np.uint64(1)


def _to_bitset(arr):
    bits = np.zeros(_WORDS, dtype=np.uint64)
    a = arr.astype(np.uint64)
    np.bitwise_or.at(bits, (a >> np.uint64(6)).astype(np.intp), _U64_ONE << (a & np.uint64(63)))
    return bits


def _bitset_to_array(bits):
    words = np.nonzero(bits)[0]
    if len(words) == 0:
        return np.empty(0, dtype=np.uint16)
    b = np.unpackbits(bits[words].view(np.uint8).reshape(-1, 8), axis=1, bitorder="little")
    w, bit = np.nonzero(b)
    return (words[w] * 64 + bit).astype(np.uint16)


def _is_array(c):
    return c.dtype == np.uint16


def _card(c):
    return len(c) if _is_array(c) else int(np.bitwise_count(c).sum())


def _pair_count(x, y):
    if _is_array(x):
        if _is_array(y):
            return kernels.array_and_count(x, y)
        return kernels.array_bitset_count(x, y)
    if _is_array(y):
        return kernels.array_bitset_count(y, x)
    return kernels.bitset_and_count(x, y)


def _pair_and(x, y):
    if _is_array(x):
        if _is_array(y):
            return kernels.array_and(x, y)
        return kernels.array_bitset_and(x, y)
    if _is_array(y):
        return kernels.array_bitset_and(y, x)
    out = x & y
    if _card(out) <= ARRAY_MAX:
        return _bitset_to_array(out)
    return out


class CompressedBitmap:
    __slots__ = ("_chunks", "_card")

    def __init__(self):
        self._chunks = {}  # high 16 bits -> container
        self._card = 0

    @classmethod
    def from_ids(cls, ids):
        ids = np.unique(np.asarray(ids, dtype=np.int64))
        if len(ids) and (ids[0] < 0 or ids[-1] > 0xFFFFFFFF):
            raise ValueError("bitmap ids must be in [0, 2**32)")
        bm = cls()
        ids = ids.astype(np.uint32)
        highs = ids >> np.uint32(16)
        cuts = np.flatnonzero(np.diff(highs)) + 1
        for part in np.split(ids, cuts) if len(ids) else ():
            low = (part & np.uint32(0xFFFF)).astype(np.uint16)
            bm._chunks[int(part[0] >> np.uint32(16))] = low if len(low) <= ARRAY_MAX else _to_bitset(low)
        bm._card = len(ids)
        return bm

    def add(self, x):
        x = int(x)
        if not 0 <= x <= 0xFFFFFFFF:
            raise ValueError("bitmap ids must be in [0, 2**32)")
        key, low = x >> 16, x & 0xFFFF
        c = self._chunks.get(key)
        if c is None:
            self._chunks[key] = np.array([low], dtype=np.uint16)
            self._card += 1
        elif _is_array(c):
            i = int(np.searchsorted(c, low))
            if i < len(c) and c[i] == low:
                return
            c = np.insert(c, i, np.uint16(low))
            self._chunks[key] = c if len(c) <= ARRAY_MAX else _to_bitset(c)
            self._card += 1
        else:
            w, b = low >> 6, _U64_ONE << np.uint64(low & 63)
            if not c[w] & b:
                c[w] |= b
                self._card += 1

    def __contains__(self, x):
        x = int(x)
        c = self._chunks.get(x >> 16)
        if c is None:
            return False
        low = x & 0xFFFF
        if _is_array(c):
            i = int(np.searchsorted(c, low))
            return i < len(c) and c[i] == low
        return bool((int(c[low >> 6]) >> (low & 63)) & 1)

    def cardinality(self):
        return self._card

    __len__ = cardinality

    def container_kinds(self):
        return {k: ("array" if _is_array(c) else "bitset") for k, c in sorted(self._chunks.items())}

    def to_array(self):
        parts = []
        for k in sorted(self._chunks):
            c = self._chunks[k]
            low = c if _is_array(c) else _bitset_to_array(c)
            parts.append(low.astype(np.int64) + (k << 16))
        return np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)

    def __iter__(self):
        return iter(self.to_array().tolist())

    def __eq__(self, other):
        return isinstance(other, CompressedBitmap) and np.array_equal(self.to_array(), other.to_array())

    def intersect_cardinality(self, other: CompressedBitmap) -> int:
        """|self & other| without building the intersection."""
        a, b = self._chunks, other._chunks
        if len(b) < len(a):
            a, b = b, a
        n = 0
        for k, c in a.items():
            d = b.get(k)
            if d is not None:
                n += _pair_count(c, d)
        return n

    def intersect(self, other: CompressedBitmap) -> CompressedBitmap:
        out = CompressedBitmap()
        a, b = self._chunks, other._chunks
        if len(b) < len(a):
            a, b = b, a
        for k, c in a.items():
            d = b.get(k)
            if d is not None:
                r = _pair_and(c, d)
                n = _card(r)
                if n:
                    out._chunks[k] = r
                    out._card += n
        return out

    def and_cardinality(self, *others: CompressedBitmap) -> int:
        """|self & others...|; only the leading pairs are materialized."""
        if not others:
            return self._card
        acc = self
        for o in others[:-1]:
            acc = acc.intersect(o)
        return acc.intersect_cardinality(others[-1])

    def __repr__(self):
        return f"CompressedBitmap(cardinality={self._card}, chunks={len(self._chunks)})"
