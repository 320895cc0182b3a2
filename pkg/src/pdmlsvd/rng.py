"""Portable seeded generator for synthetic problems.

A 64-bit linear congruential generator

    state <- (6364136223846793005 * state + 1442695040888963407) mod 2**64

whose top 53 bits give a double ``u`` in ``[0, 1)``; samples are mapped to
``2u - 1`` in ``[-1, 1)``. Arrays are filled in column-major order, so any
implementation of the same recurrence reproduces the same fixtures.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

MULTIPLIER = 6364136223846793005
INCREMENT = 1442695040888963407
_MASK = (1 << 64) - 1


class Lcg64:
    def __init__(self, seed: int = 42):
        self.state = int(seed) & _MASK

    def next_u64(self) -> int:
        self.state = (MULTIPLIER * self.state + INCREMENT) & _MASK
        return self.state

    def uniform(self, shape: Sequence[int] | int) -> np.ndarray:
        """Samples in ``[-1, 1)``, filled column-major."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape))
        state = self.state
        out = np.empty(n)
        for i in range(n):
            state = (MULTIPLIER * state + INCREMENT) & _MASK
            out[i] = (state >> 11) * 2.0**-53
        self.state = state
        return np.reshape(2.0 * out - 1.0, shape, order="F")
