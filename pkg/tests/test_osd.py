"""OSD-0: syndrome consistency, ordering determinism, equivariance."""

import numpy as np
import pytest

from qdeck import bp, noise, osd
from qdeck.bp import BpConfig
from qdeck.gf2 import BitMatrix, BitVector
from qdeck.osd import InconsistentSyndromeError, OsdInput


def test_zero_syndrome_gives_zero():
    rng = np.random.default_rng(0)
    h = BitMatrix.from_dense(rng.integers(0, 2, (4, 9)))
    rel = rng.normal(size=9)
    e = osd.osd0(OsdInput(h=h, s=BitVector.zeros(4), reliability=rel))
    assert e.is_zero()


def test_identity_matrix_reads_syndrome():
    h = BitMatrix.identity(3)
    s = BitVector.from_dense([0, 1, 0])
    for rel in ([0.1, 0.2, 0.3], [9, 5, 1], [0, 0, 0]):
        e = osd.osd0(OsdInput(h=h, s=s, reliability=np.array(rel, float)))
        assert e.to_dense().tolist() == [0, 1, 0]


def test_inconsistent_syndrome_raises():
    h = BitMatrix.from_dense([[1, 0], [1, 0]])
    s = BitVector.from_dense([1, 0])
    with pytest.raises(InconsistentSyndromeError):
        osd.osd0(OsdInput(h=h, s=s, reliability=np.zeros(2)))


def test_syndrome_consistency_randomized(code_30):
    rng = np.random.default_rng(1)
    h = code_30.hz
    hd = h.to_dense()
    for _ in range(300):
        e = (rng.random(code_30.n) < 0.1).astype(np.uint8)
        s = (hd.astype(int) @ e) % 2
        rel = rng.normal(size=code_30.n)
        e_hat = osd.osd0(OsdInput(h=h, s=BitVector.from_dense(s), reliability=rel))
        assert np.array_equal((hd.astype(int) @ e_hat.to_dense()) % 2, s)


def test_permutation_equivariance():
    rng = np.random.default_rng(2)
    h = BitMatrix.from_dense(rng.integers(0, 2, (5, 11)))
    hd = h.to_dense()
    e_true = (rng.random(11) < 0.3).astype(np.uint8)
    s = BitVector.from_dense((hd.astype(int) @ e_true) % 2)
    rel = rng.normal(size=11)
    base = osd.osd0(OsdInput(h=h, s=s, reliability=rel)).to_dense()
    for _ in range(10):
        perm = rng.permutation(11)
        hp = BitMatrix.from_dense(hd[:, perm])
        got = osd.osd0(OsdInput(h=hp, s=s, reliability=rel[perm])).to_dense()
        assert np.array_equal(got, base[perm])


def test_true_support_most_reliable_recovers_exactly(code_30):
    # when the true error's support is the most reliable set and lies in an
    # information set, OSD-0 returns it exactly
    rng = np.random.default_rng(3)
    hd = code_30.hz.to_dense()
    for _ in range(50):
        e = np.zeros(code_30.n, dtype=np.uint8)
        e[rng.choice(code_30.n, size=3, replace=False)] = 1
        s = (hd.astype(int) @ e) % 2
        rel = np.where(e == 1, 10.0, -10.0) + rng.normal(scale=0.1, size=code_30.n)
        e_hat = osd.osd0(OsdInput(
            h=code_30.hz, s=BitVector.from_dense(s), reliability=rel))
        assert np.array_equal(e_hat.to_dense(), e)


def test_tie_break_lower_index():
    # two columns are identical; equal reliabilities must pick the lower index
    h = BitMatrix.from_dense([[1, 1, 0], [1, 1, 1]])
    s = BitVector.from_dense([1, 1])
    rel = np.zeros(3)
    e = osd.osd0(OsdInput(h=h, s=s, reliability=rel))
    assert e.to_dense().tolist() == [1, 0, 0]


def test_bp_osd_pipeline_consistency(code_30):
    rng = np.random.default_rng(4)
    cfg = BpConfig(max_iters=6)
    prior = bp.prior_llr_from_p(0.08)
    hxd = code_30.hx.to_dense()
    hzd = code_30.hz.to_dense()
    for _ in range(60):
        e = noise.sample_depolarizing(code_30.n, 0.12, rng)
        syn = noise.syndrome_of(code_30, e)
        _, (soft_x, soft_z) = bp.decode_css(code_30, syn, 0.08, cfg)
        e_hat = osd.decode_css_with_osd(
            code_30, syn,
            soft_x=osd.reliability_from_llr(soft_x.llr),
            soft_z=osd.reliability_from_llr(soft_z.llr),
        )
        assert np.array_equal((hzd.astype(int) @ e_hat.ex.to_dense()) % 2,
                              syn.sz.to_dense())
        assert np.array_equal((hxd.astype(int) @ e_hat.ez.to_dense()) % 2,
                              syn.sx.to_dense())


def test_reliability_length_validated(code_30):
    with pytest.raises(ValueError):
        OsdInput(h=code_30.hz, s=BitVector.zeros(code_30.hz.rows),
                 reliability=np.zeros(3))
