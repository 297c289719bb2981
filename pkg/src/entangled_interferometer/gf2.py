"""Rank of binary matrices over GF(2)."""

from __future__ import annotations

import numpy as np


def gf2_rank(matrix) -> int:
    """GF(2) rank by Gaussian elimination with XOR row operations."""
    R = (np.asarray(matrix, dtype=np.uint8) % 2).copy()
    if R.ndim != 2 or R.size == 0:
        return 0
    m, n = R.shape
    rank = 0
    for col in range(n):
        if rank == m:
            break
        pivots = np.nonzero(R[rank:, col])[0]
        if pivots.size == 0:
            continue
        p = rank + pivots[0]
        if p != rank:
            R[[rank, p]] = R[[p, rank]]
        below = np.nonzero(R[:, col])[0]
        below = below[below != rank]
        R[below] ^= R[rank]
        rank += 1
    return rank
