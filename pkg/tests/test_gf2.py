import itertools

import numpy as np
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from entangled_interferometer.gf2 import gf2_rank


def brute_rank(M):
    """Rank as log2 of the row-space size, by enumerating all XOR combinations."""
    M = np.asarray(M, dtype=np.uint8) % 2
    span = set()
    for coeffs in itertools.product((0, 1), repeat=M.shape[0]):
        v = np.zeros(M.shape[1], dtype=np.uint8)
        for c, row in zip(coeffs, M):
            if c:
                v ^= row
        span.add(v.tobytes())
    return len(span).bit_length() - 1


def test_small_cases():
    assert gf2_rank(np.zeros((0, 4))) == 0
    assert gf2_rank([[0, 0], [0, 0]]) == 0
    assert gf2_rank(np.eye(5)) == 5
    # over the reals this has rank 3, over GF(2) the rows sum to zero
    assert gf2_rank([[1, 1, 0], [0, 1, 1], [1, 0, 1]]) == 2


def test_disjoint_pairs():
    M = np.zeros((3, 6), dtype=np.uint8)
    for i in range(3):
        M[i, 2 * i:2 * i + 2] = 1
    assert gf2_rank(M) == 3


def test_input_not_modified():
    M = np.array([[1, 1], [1, 1]], dtype=np.uint8)
    gf2_rank(M)
    assert M.tolist() == [[1, 1], [1, 1]]


@given(arrays(np.uint8, st.tuples(st.integers(1, 7), st.integers(1, 9)), elements=st.integers(0, 1)))
def test_matches_brute_force(M):
    assert gf2_rank(M) == brute_rank(M)


@given(arrays(np.uint8, st.tuples(st.integers(1, 8), st.integers(1, 8)), elements=st.integers(0, 1)))
def test_rank_invariances(M):
    r = gf2_rank(M)
    assert r <= min(M.shape)
    assert gf2_rank(M.T) == r
    assert gf2_rank(np.vstack([M, M[0] ^ M[-1]])) == r
