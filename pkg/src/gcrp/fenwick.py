"""Fenwick (binary indexed) tree over part sizes for weighted sampling.

The simulation keeps one weight per size class, w[k] = (k - alpha) * N(k),
and needs two operations per step: add a signed increment to one size's
weight, and locate the size whose cumulative weight interval contains a
uniform draw.  Both are O(log capacity).  Joining a part of size k touches
sizes k and k+1; opening a part touches size 1 — so each step costs two
point updates plus one prefix search.

The tree stores floats updated incrementally, so cell values can drift from
the exactly rebuilt tree by a few ulps over long runs; ``total`` and
``prefix_search`` semantics tolerate that, and consistency against a fresh
rebuild is checked in the test suite at relative 1e-9.
"""

from __future__ import annotations

import numpy as np


class FenwickSampler:
    """Prefix-sum tree over sizes 1..capacity (1-based)."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._tree = np.zeros(capacity + 1, dtype=np.float64)
        # highest power of two <= capacity, for the descent
        self._top_bit = 1 << (capacity.bit_length() - 1)

    def add(self, size: int, dw: float) -> None:
        if not (1 <= size <= self.capacity):
            raise IndexError(f"size {size} out of range 1..{self.capacity}")
        tree = self._tree
        j = size
        while j <= self.capacity:
            tree[j] += dw
            j += j & (-j)

    def prefix_sum(self, size: int) -> float:
        """Sum of weights of sizes 1..size."""
        s = 0.0
        j = size
        tree = self._tree
        while j > 0:
            s += tree[j]
            j -= j & (-j)
        return s

    def total(self) -> float:
        return self.prefix_sum(self.capacity)

    def prefix_search(self, target: float) -> int:
        """Smallest size whose cumulative weight exceeds ``target``.

        Clamps to ``capacity`` when target is at or beyond the total (can
        happen at the top boundary through floating-point rounding).
        """
        pos = 0
        rem = target
        bit = self._top_bit
        tree = self._tree
        while bit != 0:
            nxt = pos + bit
            if nxt <= self.capacity and tree[nxt] <= rem:
                rem -= tree[nxt]
                pos = nxt
            bit >>= 1
        return min(pos + 1, self.capacity)

    @classmethod
    def from_weights(cls, weights: dict[int, float], capacity: int) -> "FenwickSampler":
        t = cls(capacity)
        for size, w in weights.items():
            t.add(size, w)
        return t
