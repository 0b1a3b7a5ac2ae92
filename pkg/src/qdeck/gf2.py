"""Bit-packed dense GF(2) linear algebra.

Vectors and matrices store their bits row-major in little-endian uint64
words, so XOR row operations and popcount-parity inner products run as
whole-word numpy primitives.  All values are immutable after construction
and every operation is a pure function; results never alias their inputs.

This module carries all parity-check algebra in the package: syndrome
computation, code construction, rank/dimension counting, the OSD solve
step, and logical-operator extraction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

WORD_BITS = 64


def _n_words(n_bits: int) -> int:
    return (n_bits + WORD_BITS - 1) // WORD_BITS


def _pack(dense: np.ndarray, n_bits: int) -> np.ndarray:
    """Pack a (..., n_bits) 0/1 array into (..., words) little-endian uint64."""
    dense = np.ascontiguousarray(np.asarray(dense, dtype=np.uint8) & 1)
    if dense.shape[-1] != n_bits:
        raise ValueError(f"expected last axis {n_bits}, got {dense.shape[-1]}")
    n_bytes = _n_words(n_bits) * 8
    packed = np.ascontiguousarray(np.packbits(dense, axis=-1, bitorder="little"))
    pad = n_bytes - packed.shape[-1]
    if pad:
        packed = np.concatenate(
            [packed, np.zeros(packed.shape[:-1] + (pad,), dtype=np.uint8)], axis=-1
        )
    return packed.view(np.uint64)


def _unpack(words: np.ndarray, n_bits: int) -> np.ndarray:
    """Inverse of _pack: (..., words) uint64 -> (..., n_bits) uint8."""
    as_bytes = np.ascontiguousarray(words).view(np.uint8)
    bits = np.unpackbits(as_bytes, axis=-1, bitorder="little")
    return bits[..., :n_bits]


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.uint64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class BitVector:
    """Immutable GF(2) vector of `n` bits packed into uint64 words."""

    n: int
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _freeze(self.data))
        if self.data.shape != (_n_words(self.n),):
            raise ValueError("packed data inconsistent with declared length")

    @classmethod
    def zeros(cls, n: int) -> "BitVector":
        return cls(n, np.zeros(_n_words(n), dtype=np.uint64))

    @classmethod
    def from_dense(cls, bits) -> "BitVector":
        bits = np.atleast_1d(np.asarray(bits, dtype=np.uint8))
        return cls(bits.shape[0], _pack(bits, bits.shape[0]))

    def to_dense(self) -> np.ndarray:
        return _unpack(self.data, self.n)

    def weight(self) -> int:
        return int(np.bitwise_count(self.data).sum())

    def is_zero(self) -> bool:
        return not self.data.any()

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> int:
        if not 0 <= i < self.n:
            raise IndexError(i)
        return int((self.data[i >> 6] >> np.uint64(i & 63)) & np.uint64(1))

    def __xor__(self, other: "BitVector") -> "BitVector":
        if self.n != other.n:
            raise ValueError(f"length mismatch: {self.n} vs {other.n}")
        return BitVector(self.n, np.bitwise_xor(self.data, other.data))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, BitVector)
            and self.n == other.n
            and bool(np.array_equal(self.data, other.data))
        )

    def __hash__(self):
        return hash((self.n, self.data.tobytes()))


@dataclass(frozen=True)
class BitMatrix:
    """Immutable GF(2) matrix, rows packed into uint64 words."""

    rows: int
    cols: int
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _freeze(self.data))
        if self.data.shape != (self.rows, _n_words(self.cols)):
            raise ValueError("packed data inconsistent with declared shape")

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "BitMatrix":
        return cls(rows, cols, np.zeros((rows, _n_words(cols)), dtype=np.uint64))

    @classmethod
    def identity(cls, n: int) -> "BitMatrix":
        return cls.from_dense(np.eye(n, dtype=np.uint8))

    @classmethod
    def from_dense(cls, bits) -> "BitMatrix":
        bits = np.atleast_2d(np.asarray(bits, dtype=np.uint8))
        r, c = bits.shape
        return cls(r, c, _pack(bits, c).reshape(r, _n_words(c)))

    @classmethod
    def from_rows(cls, rows: list[BitVector], cols: int | None = None) -> "BitMatrix":
        if not rows:
            if cols is None:
                raise ValueError("cols required for an empty row list")
            return cls.zeros(0, cols)
        n = rows[0].n
        return cls(len(rows), n, np.stack([v.data for v in rows]))

    def to_dense(self) -> np.ndarray:
        return _unpack(self.data, self.cols).reshape(self.rows, self.cols)

    def row(self, i: int) -> BitVector:
        return BitVector(self.cols, self.data[i])

    def transpose(self) -> "BitMatrix":
        return BitMatrix.from_dense(self.to_dense().T)

    def popcount(self) -> int:
        return int(np.bitwise_count(self.data).sum())

    def is_zero(self) -> bool:
        return not self.data.any()

    def __getitem__(self, ij: tuple[int, int]) -> int:
        i, j = ij
        if not (0 <= i < self.rows and 0 <= j < self.cols):
            raise IndexError(ij)
        return int((self.data[i, j >> 6] >> np.uint64(j & 63)) & np.uint64(1))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, BitMatrix)
            and (self.rows, self.cols) == (other.rows, other.cols)
            and bool(np.array_equal(self.data, other.data))
        )

    def __hash__(self):
        return hash((self.rows, self.cols, self.data.tobytes()))


def dot_mod2(a: BitVector, b: BitVector) -> int:
    """Inner product over GF(2)."""
    if a.n != b.n:
        raise ValueError(f"length mismatch: {a.n} vs {b.n}")
    return int(np.bitwise_count(np.bitwise_and(a.data, b.data)).sum()) & 1


def matvec_mod2(m: BitMatrix, v: BitVector) -> BitVector:
    """Compute m @ v over GF(2): result[i] = XOR_j m[i,j] & v[j]."""
    if v.n != m.cols:
        raise ValueError(f"dimension mismatch: matrix cols {m.cols}, vector {v.n}")
    parities = np.bitwise_count(np.bitwise_and(m.data, v.data[None, :])).sum(axis=1) & 1
    return BitVector(m.rows, _pack(parities.astype(np.uint8), m.rows))


def matmul_mod2(a: BitMatrix, b: BitMatrix) -> BitMatrix:
    """Compute a @ b over GF(2)."""
    if a.cols != b.rows:
        raise ValueError(f"dimension mismatch: {a.cols} vs {b.rows}")
    bt = b.transpose()  # (b.cols, words of b.rows axis) -> row i of bt is column i of b
    out = np.zeros((a.rows, b.cols), dtype=np.uint8)
    # chunk over rows of a to bound the broadcast workspace
    step = max(1, (1 << 22) // max(1, b.cols * a.data.shape[1] * 8))
    for lo in range(0, a.rows, step):
        hi = min(a.rows, lo + step)
        acc = np.bitwise_count(
            np.bitwise_and(a.data[lo:hi, None, :], bt.data[None, :, :])
        ).sum(axis=2)
        out[lo:hi] = (acc & 1).astype(np.uint8)
    return BitMatrix.from_dense(out)


def row_reduce(m: BitMatrix) -> tuple[BitMatrix, list[int], BitMatrix]:
    """Reduced row-echelon form over GF(2).

    Returns (reduced, pivot_cols, transform) with transform @ m == reduced,
    transform invertible, and pivot_cols strictly increasing.  Pivot search
    takes the lowest-index row available for each column, lowest column
    first, so the result is deterministic.
    """
    mw = m.data.shape[1]
    tw = _n_words(m.rows)
    aug = np.zeros((m.rows, mw + tw), dtype=np.uint64)
    aug[:, :mw] = m.data
    for i in range(m.rows):  # identity block
        aug[i, mw + (i >> 6)] |= np.uint64(1) << np.uint64(i & 63)

    pivot_cols: list[int] = []
    r = 0
    one = np.uint64(1)
    for c in range(m.cols):
        if r == m.rows:
            break
        w, b = c >> 6, np.uint64(c & 63)
        col = (aug[r:, w] >> b) & one
        nz = np.nonzero(col)[0]
        if nz.size == 0:
            continue
        piv = r + int(nz[0])
        if piv != r:
            aug[[r, piv]] = aug[[piv, r]]
        hits = np.nonzero((aug[:, w] >> b) & one)[0]
        hits = hits[hits != r]
        if hits.size:
            aug[hits] ^= aug[r]
        pivot_cols.append(c)
        r += 1

    reduced = BitMatrix(m.rows, m.cols, aug[:, :mw].copy())
    transform = BitMatrix(m.rows, m.rows, aug[:, mw:].copy())
    return reduced, pivot_cols, transform


def rank(m: BitMatrix) -> int:
    """GF(2) rank: the number of pivots of row_reduce."""
    _, pivots, _ = row_reduce(m)
    return len(pivots)


def solve(m: BitMatrix, s: BitVector) -> BitVector | None:
    """Find any x with m @ x == s, or None when the system is inconsistent."""
    if s.n != m.rows:
        raise ValueError(f"dimension mismatch: matrix rows {m.rows}, rhs {s.n}")
    reduced, pivots, transform = row_reduce(m)
    ts = matvec_mod2(transform, s).to_dense()
    if ts[len(pivots):].any():
        return None
    x = np.zeros(m.cols, dtype=np.uint8)
    for r, c in enumerate(pivots):
        x[c] = ts[r]
    return BitVector.from_dense(x)


def nullspace_basis(m: BitMatrix) -> BitMatrix:
    """Basis of {x : m @ x == 0}, one row per free column (ascending)."""
    reduced, pivots, _ = row_reduce(m)
    pivot_set = set(pivots)
    free_cols = [c for c in range(m.cols) if c not in pivot_set]
    dense = reduced.to_dense()
    basis = np.zeros((len(free_cols), m.cols), dtype=np.uint8)
    for i, f in enumerate(free_cols):
        basis[i, f] = 1
        for r, c in enumerate(pivots):
            basis[i, c] = dense[r, f]
    return BitMatrix.from_dense(basis) if free_cols else BitMatrix.zeros(0, m.cols)


def vstack(mats: list[BitMatrix]) -> BitMatrix:
    """Stack matrices with equal column counts."""
    cols = {m.cols for m in mats}
    if len(cols) != 1:
        raise ValueError(f"column counts differ: {sorted(cols)}")
    return BitMatrix(
        sum(m.rows for m in mats), cols.pop(), np.concatenate([m.data for m in mats])
    )


def in_rowspace(rref: BitMatrix, pivots: list[int], v: BitVector) -> bool:
    """Membership test against a precomputed reduced row-echelon basis."""
    u = np.array(v.data)
    for r, c in enumerate(pivots):
        if (u[c >> 6] >> np.uint64(c & 63)) & np.uint64(1):
            u ^= rref.data[r]
    return not u.any()
