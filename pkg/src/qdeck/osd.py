"""Order-0 ordered-statistics decoding.

OSD-0 turns any soft decoder output into a syndrome-consistent error
estimate: sort columns by decreasing error reliability, Gaussian-eliminate
to the first information set in that order, zero the non-pivot bits and
solve the pivot bits exactly.

Reliability convention here: larger value = more likely to be in error.
Use -llr for BP posteriors and the error-class probability mass
(P(X)+P(Y) or P(Z)+P(Y)) for class-probability decoders.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codes import CssCode
from .gf2 import BitMatrix, BitVector
from .noise import PauliError, Syndrome


class InconsistentSyndromeError(Exception):
    """The syndrome is not in the column space of the check matrix."""


@dataclass(frozen=True)
class OsdInput:
    h: BitMatrix
    s: BitVector
    reliability: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "reliability", np.asarray(self.reliability, dtype=np.float64)
        )
        if self.reliability.shape != (self.h.cols,):
            raise ValueError(
                f"reliability length {self.reliability.shape} != cols {self.h.cols}"
            )
        if self.s.n != self.h.rows:
            raise ValueError(f"syndrome length {self.s.n} != rows {self.h.rows}")


def reliability_from_llr(llr: np.ndarray) -> np.ndarray:
    return -np.asarray(llr, dtype=np.float64)


def osd0(inp: OsdInput) -> BitVector:
    """Most-reliable-information-set re-solve; ties break on lower index."""
    order = np.argsort(-inp.reliability, kind="stable")
    e_perm = _osd0_permuted(inp.h.to_dense()[:, order], inp.s.to_dense())
    e = np.zeros(inp.h.cols, dtype=np.uint8)
    e[order] = e_perm
    return BitVector.from_dense(e)


def _osd0_permuted(hd: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Solve hd @ e == s with non-pivot bits fixed to zero (dense uint8)."""
    m, n = hd.shape
    aug = np.concatenate([hd, s[:, None]], axis=1).astype(np.uint8)
    pivots = []
    r = 0
    for c in range(n):
        if r == m:
            break
        nz = np.nonzero(aug[r:, c])[0]
        if nz.size == 0:
            continue
        piv = r + int(nz[0])
        if piv != r:
            aug[[r, piv]] = aug[[piv, r]]
        hits = np.nonzero(aug[:, c])[0]
        hits = hits[hits != r]
        if hits.size:
            aug[hits] ^= aug[r]
        pivots.append(c)
        r += 1
    if aug[r:, n].any():
        raise InconsistentSyndromeError(
            "syndrome outside the column space of the check matrix"
        )
    e = np.zeros(n, dtype=np.uint8)
    for row, c in enumerate(pivots):
        e[c] = aug[row, n]
    return e


def decode_css_with_osd(
    code: CssCode,
    syn: Syndrome,
    soft_x: np.ndarray,
    soft_z: np.ndarray,
) -> PauliError:
    """OSD-0 on both components; the result always reproduces syn.

    soft_x / soft_z are per-qubit reliabilities for the X- and Z-error
    components (larger = more likely errored).
    """
    ex = osd0(OsdInput(h=code.hz, s=syn.sz, reliability=soft_x))
    ez = osd0(OsdInput(h=code.hx, s=syn.sx, reliability=soft_z))
    return PauliError(ex=ex, ez=ez)
