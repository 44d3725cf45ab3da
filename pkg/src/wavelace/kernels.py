"""Bitset helpers.

Block sets are Python ints used as bitsets over store indices; these are
the inner loops of every closure query.
"""
from __future__ import annotations

from typing import Sequence

# bit positions set in each byte value, precomputed once
_BYTE_BITS = tuple(tuple(j for j in range(8) if (v >> j) & 1) for v in range(256))


def bit_list(mask: int) -> list[int]:
    """Indices of the set bits of ``mask`` in ascending order."""
    if mask <= 0:
        return []
    out: list[int] = []
    data = mask.to_bytes((mask.bit_length() + 7) // 8, "little")
    base = 0
    for byte in data:
        if byte:
            for j in _BYTE_BITS[byte]:
                out.append(base + j)
        base += 8
    return out


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def count_owners(mask: int, owner_masks: Sequence[int]) -> int:
    """Number of owner masks that intersect ``mask``."""
    n = 0
    for m in owner_masks:
        if mask & m:
            n += 1
    return n
