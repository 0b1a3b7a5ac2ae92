"""Shared fixtures and independent oracles for the test suite.

The oracle helpers here deliberately avoid the packed-word code paths in
qdeck.gf2: they run naive dense mod-2 arithmetic so that agreement is a
genuine cross-check, not a tautology.
"""

import numpy as np
import pytest

from qdeck import codes


# -- naive dense GF(2) oracles ------------------------------------------------


def oracle_matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = np.zeros(m.shape[0], dtype=np.uint8)
    for i in range(m.shape[0]):
        acc = 0
        for j in range(m.shape[1]):
            acc ^= int(m[i, j]) & int(v[j])
        out[i] = acc
    return out


def oracle_rank(m: np.ndarray) -> int:
    m = (np.array(m, dtype=np.uint8) % 2).copy()
    rows, cols = m.shape
    r = 0
    for c in range(cols):
        piv = None
        for i in range(r, rows):
            if m[i, c]:
                piv = i
                break
        if piv is None:
            continue
        m[[r, piv]] = m[[piv, r]]
        for i in range(rows):
            if i != r and m[i, c]:
                m[i] ^= m[r]
        r += 1
    return r


def oracle_solve_exhaustive(m: np.ndarray, s: np.ndarray):
    """All solutions of m x = s by brute force over 2^cols (cols small)."""
    rows, cols = m.shape
    sols = []
    for bits in range(1 << cols):
        x = np.array([(bits >> j) & 1 for j in range(cols)], dtype=np.uint8)
        if np.array_equal((m.astype(int) @ x) % 2, s.astype(int) % 2):
            sols.append(x)
    return sols


def enumerate_rowspace(m: np.ndarray) -> set[bytes]:
    """All vectors in the row space (row count kept small by callers)."""
    basis = []
    mm = (np.array(m, dtype=np.uint8) % 2).copy()
    r = 0
    for c in range(mm.shape[1]):
        piv = None
        for i in range(r, mm.shape[0]):
            if mm[i, c]:
                piv = i
                break
        if piv is None:
            continue
        mm[[r, piv]] = mm[[piv, r]]
        for i in range(mm.shape[0]):
            if i != r and mm[i, c]:
                mm[i] ^= mm[r]
        r += 1
    basis = mm[:r]
    out = set()
    for bits in range(1 << len(basis)):
        v = np.zeros(m.shape[1], dtype=np.uint8)
        for j in range(len(basis)):
            if (bits >> j) & 1:
                v ^= basis[j]
        out.add(v.tobytes())
    return out


# -- fixtures -----------------------------------------------------------------


@pytest.fixture(scope="session")
def registry():
    return codes.load_default_registry()


@pytest.fixture(scope="session")
def code_30(registry):
    return codes.build_code(codes.get_spec(registry, "[[30,4,6]]"))


@pytest.fixture(scope="session")
def code_72(registry):
    return codes.build_code(codes.get_spec(registry, "[[72,12,6]]"))


@pytest.fixture(scope="session")
def toy_code():
    """10-qubit toy CSS pair used by the NN gradient tests."""
    spec = codes.CodeSpec(
        name="toy-10", family="coprime_bb", lx=1, ly=5,
        poly_a=(codes.Monomial(0, 0), codes.Monomial(0, 1)),
        poly_b=(codes.Monomial(0, 0), codes.Monomial(0, 2)),
        expected_k=2,
    )
    return codes.build_code(spec)
