"""Depolarizing noise, syndromes, error-class encoding, dataset files.

Errors are kept in binary symplectic form as a pair of bit vectors
(ex, ez); a Y error on qubit i sets both bits, i.e. Y is treated as a
simultaneous X and Z error.  Per-qubit classes use the fixed order
I, X, Z, Y so that class index == ex + 2*ez.

Dataset files are self-describing little-endian binaries with fixed-width
records (magic "QLDPC-DS\\x01").  Syndromes are stored rather than
recomputed, so a mismatched or corrupted code is detectable on load.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .codes import CssCode
from .gf2 import BitVector, matvec_mod2

CLASS_NAMES = ("I", "X", "Z", "Y")
DATASET_MAGIC = b"QLDPC-DS\x01"

_UNIFORM_P = 0
_FIXED_P = 1


@dataclass(frozen=True)
class PauliError:
    """Binary symplectic error: X-part and Z-part bit vectors of length n."""

    ex: BitVector
    ez: BitVector

    def __post_init__(self):
        if self.ex.n != self.ez.n:
            raise ValueError(f"component length mismatch: {self.ex.n} vs {self.ez.n}")

    @property
    def n(self) -> int:
        return self.ex.n

    @classmethod
    def identity(cls, n: int) -> "PauliError":
        return cls(BitVector.zeros(n), BitVector.zeros(n))

    @classmethod
    def from_dense(cls, ex, ez) -> "PauliError":
        return cls(BitVector.from_dense(ex), BitVector.from_dense(ez))

    def __xor__(self, other: "PauliError") -> "PauliError":
        return PauliError(self.ex ^ other.ex, self.ez ^ other.ez)

    def weight(self) -> int:
        """Number of qubits carrying any error."""
        return int(
            np.count_nonzero(self.ex.to_dense() | self.ez.to_dense())
        )


@dataclass(frozen=True)
class Syndrome:
    """Stabilizer outcomes: sx from the X-checks, sz from the Z-checks."""

    sx: BitVector
    sz: BitVector

    def is_zero(self) -> bool:
        return self.sx.is_zero() and self.sz.is_zero()


def sample_depolarizing(n: int, p: float, rng: np.random.Generator) -> PauliError:
    """Sample i.i.d. depolarizing noise on n qubits.

    Each qubit errs with probability p; conditional on an error, X, Y and
    Z are equally likely (p/3 each).
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    errs = rng.random(n) < p
    kind = rng.integers(0, 3, size=n)  # 0 -> X, 1 -> Y, 2 -> Z
    ex = errs & (kind != 2)
    ez = errs & (kind != 0)
    return PauliError.from_dense(ex.astype(np.uint8), ez.astype(np.uint8))


def syndrome_of(code: CssCode, e: PauliError) -> Syndrome:
    """Measure e: X-checks detect the Z-component and vice versa."""
    if e.n != code.n:
        raise ValueError(f"error length {e.n} does not match code n = {code.n}")
    return Syndrome(sx=matvec_mod2(code.hx, e.ez), sz=matvec_mod2(code.hz, e.ex))


def error_classes(e: PauliError) -> np.ndarray:
    """Per-qubit labels: 0=I, 1=X, 2=Z, 3=Y (index = ex + 2*ez)."""
    return (e.ex.to_dense() + 2 * e.ez.to_dense()).astype(np.uint8)


def classes_to_pauli(labels) -> PauliError:
    """Inverse of error_classes; exact round trip."""
    labels = np.asarray(labels, dtype=np.uint8)
    if labels.size and labels.max() > 3:
        raise ValueError("class labels must be in 0..3")
    return PauliError.from_dense(labels & 1, labels >> 1)


@dataclass(frozen=True)
class DatasetHeader:
    code_name: str
    n: int
    mx: int
    mz: int
    count: int
    seed: int
    mode: int
    p_param: float  # p_max in uniform mode, the fixed p otherwise


class Dataset:
    """In-memory view of a dataset file: dense error/syndrome arrays."""

    def __init__(self, header: DatasetHeader, p, ex, ez, sx, sz):
        self.header = header
        self.p = p          # (count,) float64
        self.ex = ex        # (count, n) uint8
        self.ez = ez
        self.sx = sx        # (count, mx) uint8
        self.sz = sz

    def __len__(self) -> int:
        return self.header.count

    def record(self, i: int) -> tuple[float, PauliError, Syndrome]:
        e = PauliError.from_dense(self.ex[i], self.ez[i])
        s = Syndrome(BitVector.from_dense(self.sx[i]), BitVector.from_dense(self.sz[i]))
        return float(self.p[i]), e, s

    def classes(self) -> np.ndarray:
        """(count, n) per-qubit class labels."""
        return (self.ex + 2 * self.ez).astype(np.uint8)

    def syndromes(self) -> np.ndarray:
        """(count, mx + mz) concatenated syndrome bits."""
        return np.concatenate([self.sx, self.sz], axis=1)


def _record_rng(seed: int, index: int) -> np.random.Generator:
    # independent per-record stream; workers may sample records in parallel
    return np.random.default_rng(np.random.SeedSequence((seed, index)))


def _pack_bits_bytes(bits: np.ndarray) -> bytes:
    return np.packbits(bits.astype(np.uint8), bitorder="little").tobytes()


def generate_dataset(
    code: CssCode,
    count: int,
    p_max: float,
    seed: int,
    path,
    fixed_p: float | None = None,
) -> None:
    """Write `count` sampled (p, error, syndrome) records to `path`.

    Each record's error rate is drawn uniformly from [0, p_max]; with
    fixed_p set, every record uses that rate instead (test-set mode).
    Byte-identical output for identical arguments.
    """
    if count <= 0:
        raise ValueError(f"count must be positive, got {count}")
    if fixed_p is None:
        if not 0.0 < p_max <= 1.0:
            raise ValueError(f"p_max must be in (0, 1], got {p_max}")
        mode, p_param = _UNIFORM_P, float(p_max)
    else:
        if not 0.0 <= fixed_p <= 1.0:
            raise ValueError(f"fixed_p must be in [0, 1], got {fixed_p}")
        mode, p_param = _FIXED_P, float(fixed_p)

    mx, mz = code.hx.rows, code.hz.rows
    name_bytes = code.name.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<H", len(name_bytes)))
        fh.write(name_bytes)
        fh.write(struct.pack("<IIIQQBd", code.n, mx, mz, count, seed, mode, p_param))
        for i in range(count):
            rng = _record_rng(seed, i)
            p = p_param if mode == _FIXED_P else rng.uniform(0.0, p_param)
            err = sample_depolarizing(code.n, p, rng)
            syn = syndrome_of(code, err)
            fh.write(struct.pack("<d", p))
            fh.write(_pack_bits_bytes(err.ex.to_dense()))
            fh.write(_pack_bits_bytes(err.ez.to_dense()))
            fh.write(_pack_bits_bytes(syn.sx.to_dense()))
            fh.write(_pack_bits_bytes(syn.sz.to_dense()))


class DatasetFormatError(Exception):
    pass


def load_dataset(path, code: CssCode | None = None, validate_sample: int = 32) -> Dataset:
    """Read a dataset file; optionally cross-check it against a code.

    With a code given, the header must match and a seeded sample of
    records has its stored syndrome recomputed from the stored error.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(DATASET_MAGIC):
        raise DatasetFormatError(f"{path}: bad magic / version")
    off = len(DATASET_MAGIC)
    (name_len,) = struct.unpack_from("<H", blob, off)
    off += 2
    code_name = blob[off:off + name_len].decode("utf-8")
    off += name_len
    n, mx, mz, count, seed, mode, p_param = struct.unpack_from("<IIIQQBd", blob, off)
    off += struct.calcsize("<IIIQQBd")
    header = DatasetHeader(code_name, n, mx, mz, count, seed, mode, p_param)

    nb = (n + 7) // 8
    xb, zb = (mx + 7) // 8, (mz + 7) // 8
    rec_size = 8 + 2 * nb + xb + zb
    if len(blob) - off != count * rec_size:
        raise DatasetFormatError(
            f"{path}: expected {count} records of {rec_size} bytes, "
            f"found {len(blob) - off} payload bytes"
        )
    raw = np.frombuffer(blob, dtype=np.uint8, offset=off).reshape(count, rec_size)
    p = raw[:, :8].copy().view(np.float64).reshape(count)

    def unpack(cols, start, nbits):
        bits = np.unpackbits(raw[:, start:start + cols], axis=1, bitorder="little")
        return bits[:, :nbits]

    ex = unpack(nb, 8, n)
    ez = unpack(nb, 8 + nb, n)
    sx = unpack(xb, 8 + 2 * nb, mx)
    sz = unpack(zb, 8 + 2 * nb + xb, mz)
    ds = Dataset(header, p, ex, ez, sx, sz)

    if code is not None:
        if code.name != code_name or code.n != n or code.hx.rows != mx or code.hz.rows != mz:
            raise DatasetFormatError(
                f"{path}: dataset was generated for {code_name} "
                f"(n={n}, mx={mx}, mz={mz}), not {code.name}"
            )
        check_rng = np.random.default_rng(np.random.SeedSequence((seed, count, 17)))
        idx = check_rng.choice(count, size=min(validate_sample, count), replace=False)
        for i in idx:
            _, err, syn = ds.record(int(i))
            again = syndrome_of(code, err)
            if again.sx != syn.sx or again.sz != syn.sz:
                raise DatasetFormatError(
                    f"{path}: stored syndrome of record {i} does not match the code"
                )
    return ds
