"""Construction of bivariate-bicycle (BB) and coprime-BB CSS codes.

A BB code on an lx-by-ly torus is defined by two shift polynomials.  With
x and y the commuting cyclic shifts along the two torus directions, each
monomial x^a y^b contributes the permutation matrix S_lx^a (x) S_ly^b, and

    A = poly_a(x, y),  B = poly_b(x, y),
    hx = [A | B],      hz = [B^T | A^T],

so hx @ hz^T = A B + B A = 0 (mod 2) by commutativity.  When
gcd(lx, ly) == 1 the 2D shift group is cyclic of order lx*ly and the same
monomials collapse onto powers of a single shift T with x = T^ly,
y = T^lx; the block form is unchanged.

The shipped registry (data/registry.json) carries the monomial exponents
for each named code instance; every build validates the CSS condition and
the logical count k against the registry label.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence

import numpy as np

from . import gf2
from .gf2 import BitMatrix, BitVector

FAMILIES = ("bb", "coprime_bb")


class CodeConstructionError(Exception):
    """A code spec is invalid or the built code violates its contract."""


@dataclass(frozen=True)
class Monomial:
    """One term x^a y^b of a shift polynomial; exponents live on the torus."""

    x_exp: int
    y_exp: int


@dataclass(frozen=True)
class CodeSpec:
    """Registry entry naming a code and its shift-polynomial data."""

    name: str
    family: str
    lx: int
    ly: int
    poly_a: tuple[Monomial, ...]
    poly_b: tuple[Monomial, ...]
    expected_k: int
    distance_label: str = ""

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise CodeConstructionError(
                f"{self.name}: unknown family {self.family!r}"
            )
        if self.lx < 1 or self.ly < 1:
            raise CodeConstructionError(f"{self.name}: torus dimensions must be >= 1")
        if self.family == "coprime_bb" and math.gcd(self.lx, self.ly) != 1:
            raise CodeConstructionError(
                f"{self.name}: coprime_bb requires gcd(lx, ly) == 1, "
                f"got gcd({self.lx}, {self.ly}) = {math.gcd(self.lx, self.ly)}"
            )
        for label, poly in (("poly_a", self.poly_a), ("poly_b", self.poly_b)):
            if not poly:
                raise CodeConstructionError(f"{self.name}: {label} is empty")
            reduced = tuple(
                Monomial(m.x_exp % self.lx, m.y_exp % self.ly) for m in poly
            )
            if len(set(reduced)) != len(reduced):
                raise CodeConstructionError(
                    f"{self.name}: duplicate monomials in {label}"
                )
            object.__setattr__(self, label, reduced)

    @property
    def n(self) -> int:
        return 2 * self.lx * self.ly


@dataclass(frozen=True)
class CssCode:
    """A built CSS code: parity checks plus paired logical operator bases."""

    name: str
    n: int
    k: int
    hx: BitMatrix
    hz: BitMatrix
    lx_ops: BitMatrix
    lz_ops: BitMatrix
    spec: CodeSpec | None = field(default=None, compare=False)


def _shift_matrix(size: int, power: int) -> np.ndarray:
    s = np.zeros((size, size), dtype=np.uint8)
    idx = np.arange(size)
    s[idx, (idx + power) % size] = 1
    return s


def _bb_block(lx: int, ly: int, poly: Sequence[Monomial]) -> np.ndarray:
    block = np.zeros((lx * ly, lx * ly), dtype=np.uint8)
    for m in poly:
        block ^= np.kron(_shift_matrix(lx, m.x_exp), _shift_matrix(ly, m.y_exp))
    return block


def _coprime_block(lx: int, ly: int, poly: Sequence[Monomial]) -> np.ndarray:
    # x = T^ly and y = T^lx on the combined cycle of length lx*ly
    size = lx * ly
    block = np.zeros((size, size), dtype=np.uint8)
    for m in poly:
        block ^= _shift_matrix(size, (m.x_exp * ly + m.y_exp * lx) % size)
    return block


def _assemble(spec: CodeSpec, a: np.ndarray, b: np.ndarray) -> CssCode:
    hx = BitMatrix.from_dense(np.hstack([a, b]))
    hz = BitMatrix.from_dense(np.hstack([b.T, a.T]))
    if not gf2.matmul_mod2(hx, hz.transpose()).is_zero():
        raise CodeConstructionError(f"{spec.name}: hx @ hz^T != 0, construction bug")
    k = spec.n - gf2.rank(hx) - gf2.rank(hz)
    if k == 0:
        raise CodeConstructionError(f"{spec.name}: degenerate spec (k == 0)")
    if k != spec.expected_k:
        raise CodeConstructionError(
            f"{spec.name}: computed k = {k} but registry expects {spec.expected_k}"
        )
    lx_ops, lz_ops = compute_logicals(hx, hz)
    if lx_ops.rows != k:
        raise CodeConstructionError(
            f"{spec.name}: extracted {lx_ops.rows} logical pairs, expected {k}"
        )
    return CssCode(
        name=spec.name, n=spec.n, k=k, hx=hx, hz=hz,
        lx_ops=lx_ops, lz_ops=lz_ops, spec=spec,
    )


def build_bb_code(spec: CodeSpec) -> CssCode:
    """Build a BB code from its spec; validates CSS structure and k."""
    if spec.family != "bb":
        raise CodeConstructionError(f"{spec.name}: build_bb_code needs family 'bb'")
    a = _bb_block(spec.lx, spec.ly, spec.poly_a)
    b = _bb_block(spec.lx, spec.ly, spec.poly_b)
    return _assemble(spec, a, b)


def build_coprime_bb_code(spec: CodeSpec) -> CssCode:
    """Build a coprime-BB code (univariate collapse of the torus shifts)."""
    if spec.family != "coprime_bb":
        raise CodeConstructionError(
            f"{spec.name}: build_coprime_bb_code needs family 'coprime_bb'"
        )
    a = _coprime_block(spec.lx, spec.ly, spec.poly_a)
    b = _coprime_block(spec.lx, spec.ly, spec.poly_b)
    return _assemble(spec, a, b)


def build_code(spec: CodeSpec) -> CssCode:
    """Dispatch on spec.family."""
    if spec.family == "bb":
        return build_bb_code(spec)
    return build_coprime_bb_code(spec)


class _Eliminator:
    """Incremental GF(2) span with membership testing and reduction."""

    def __init__(self, cols: int):
        self.cols = cols
        self.rows: list[np.ndarray] = []  # packed, mutually reduced
        self.pivots: list[int] = []

    def reduce(self, v: np.ndarray) -> np.ndarray:
        v = np.array(v)
        for row, p in zip(self.rows, self.pivots):
            if (v[p >> 6] >> np.uint64(p & 63)) & np.uint64(1):
                v ^= row
        return v

    def add(self, v: np.ndarray) -> bool:
        """Insert v's residue; returns False when v is already in the span."""
        res = self.reduce(v)
        if not res.any():
            return False
        bits = gf2._unpack(res, self.cols)
        self.rows.append(res)
        self.pivots.append(int(np.argmax(bits)))
        return True


def compute_logicals(hx: BitMatrix, hz: BitMatrix) -> tuple[BitMatrix, BitMatrix]:
    """Paired logical operator bases for a CSS pair.

    X-logical representatives span ker(hz) modulo rowspace(hx); Z-logicals
    symmetrically.  The bases are then adjusted with symplectic
    Gram-Schmidt so lx_ops @ lz_ops^T is exactly the identity, which makes
    the pairing full rank and the choice deterministic.
    """
    lx_rows = _quotient_basis(hz, hx)
    lz_rows = _quotient_basis(hx, hz)
    k = len(lx_rows)
    if len(lz_rows) != k:
        raise CodeConstructionError(
            f"asymmetric logical counts ({k} vs {len(lz_rows)}); not a CSS pair?"
        )
    n = hx.cols
    if k == 0:
        return BitMatrix.zeros(0, n), BitMatrix.zeros(0, n)

    lx = [BitVector(n, r) for r in lx_rows]
    lz = [BitVector(n, r) for r in lz_rows]
    for i in range(k):
        j = next(
            (jj for jj in range(i, k) if gf2.dot_mod2(lx[i], lz[jj])), None
        )
        if j is None:
            raise CodeConstructionError("degenerate symplectic pairing")
        lz[i], lz[j] = lz[j], lz[i]
        for jj in range(k):
            if jj != i and gf2.dot_mod2(lx[i], lz[jj]):
                lz[jj] = lz[jj] ^ lz[i]
        for ii in range(k):
            if ii != i and gf2.dot_mod2(lx[ii], lz[i]):
                lx[ii] = lx[ii] ^ lx[i]
    return gf2.BitMatrix.from_rows(lx, n), gf2.BitMatrix.from_rows(lz, n)


def _quotient_basis(h_kernel_of: BitMatrix, h_modulo: BitMatrix) -> list[np.ndarray]:
    """Representatives of ker(h_kernel_of) / rowspace(h_modulo), packed."""
    kernel = gf2.nullspace_basis(h_kernel_of)
    elim = _Eliminator(h_modulo.cols)
    for i in range(h_modulo.rows):
        elim.add(h_modulo.data[i])
    reps: list[np.ndarray] = []
    for i in range(kernel.rows):
        if elim.add(kernel.data[i]):
            reps.append(np.array(kernel.data[i]))
    return reps


def load_code_registry(path) -> list[CodeSpec]:
    """Load and validate a JSON code registry file."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read().strip()
    raw = json.loads(text) if text else []
    specs = []
    for entry in raw:
        try:
            specs.append(
                CodeSpec(
                    name=entry["name"],
                    family=entry["family"],
                    lx=int(entry["lx"]),
                    ly=int(entry["ly"]),
                    poly_a=tuple(Monomial(int(a), int(b)) for a, b in entry["poly_a"]),
                    poly_b=tuple(Monomial(int(a), int(b)) for a, b in entry["poly_b"]),
                    expected_k=int(entry["expected_k"]),
                    distance_label=str(entry.get("distance_label", "")),
                )
            )
        except CodeConstructionError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            name = entry.get("name", "<unnamed>") if isinstance(entry, dict) else entry
            raise CodeConstructionError(f"registry entry {name!r}: {exc}") from exc
    return specs


def default_registry_path():
    return resources.files("qdeck").joinpath("data/registry.json")


def load_default_registry() -> list[CodeSpec]:
    """The registry shipped with the package (seven BB / coprime-BB codes)."""
    with resources.as_file(default_registry_path()) as p:
        return load_code_registry(p)


def get_spec(specs: Sequence[CodeSpec], name: str) -> CodeSpec:
    for s in specs:
        if s.name == name:
            return s
    raise KeyError(f"no code named {name!r} in registry")
