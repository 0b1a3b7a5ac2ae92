"""Belief propagation: fixed points, ML agreement on tiny codes, batching."""

import numpy as np
import pytest

from qdeck import bp, noise
from qdeck.bp import BatchBpDecoder, BpConfig
from qdeck.gf2 import BitMatrix, BitVector


REP3 = BitMatrix.from_dense([[1, 1, 0], [0, 1, 1]])


def test_config_validation():
    with pytest.raises(ValueError):
        BpConfig(max_iters=0)
    with pytest.raises(ValueError):
        BpConfig(method="bogus")
    with pytest.raises(ValueError):
        BpConfig(ms_scaling=0.0)
    with pytest.raises(ValueError):
        BpConfig(schedule="waveform")


def test_prior_llr_values():
    assert bp.prior_llr_from_p(0.375) == pytest.approx(np.log(3.0))
    assert bp.prior_llr_from_p(0.05) == pytest.approx(3.3673, abs=1e-3)
    assert bp.prior_llr_from_p(1e-12) == pytest.approx(bp.LLR_CLAMP)
    for bad in (0.0, 0.75, 0.9, -0.1):
        with pytest.raises(ValueError):
            bp.prior_llr_from_p(bad)


def test_zero_syndrome_fixed_point():
    for schedule in ("serial", "parallel"):
        cfg = BpConfig(max_iters=8, schedule=schedule)
        dec = bp.bp_decode(REP3, BitVector.zeros(2), 2.0, cfg)
        assert dec.converged and dec.iters_used == 1
        assert dec.hard.is_zero()


def test_repetition_single_flip_matches_ml():
    # exhaustive ML oracle over all 8 candidate errors at p < 0.5:
    # min-weight error matching the syndrome
    cfg = BpConfig(max_iters=16, method="min_sum", ms_scaling=0.725)
    prior = 2.0
    for true_bits in ([1, 0, 0], [0, 1, 0], [0, 0, 1]):
        e = np.array(true_bits, dtype=np.uint8)
        s = BitVector.from_dense((REP3.to_dense().astype(int) @ e) % 2)
        dec = bp.bp_decode(REP3, s, prior, cfg)
        assert dec.converged
        best = min(
            (x for x in _all_vectors(3)
             if np.array_equal((REP3.to_dense().astype(int) @ x) % 2,
                               s.to_dense())),
            key=lambda x: x.sum(),
        )
        assert np.array_equal(dec.hard.to_dense(), best)


def _all_vectors(n):
    return [np.array([(b >> j) & 1 for j in range(n)], dtype=np.uint8)
            for b in range(1 << n)]


def test_converged_implies_syndrome_match(code_30):
    rng = np.random.default_rng(0)
    cfg = BpConfig(max_iters=20)
    hz = code_30.hz
    prior = bp.prior_llr_from_p(0.05)
    for _ in range(50):
        e = noise.sample_depolarizing(code_30.n, 0.08, rng)
        syn = noise.syndrome_of(code_30, e)
        dec = bp.bp_decode(hz, syn.sz, prior, cfg)
        if dec.converged:
            got = (hz.to_dense().astype(int) @ dec.hard.to_dense()) % 2
            assert np.array_equal(got, syn.sz.to_dense())
        assert np.array_equal(dec.hard.to_dense(), (dec.llr < 0).astype(np.uint8))


def test_weight_one_errors_minimum_weight(code_30):
    # all 30 single-X errors at p=0.05: hard output must be a minimum-weight
    # syndrome-consistent error for >= 90% of cases (oracle: weight <= 2 search)
    cfg = BpConfig(max_iters=20, method="min_sum", ms_scaling=0.725)
    prior = bp.prior_llr_from_p(0.05)
    hz = code_30.hz.to_dense()
    hits = 0
    for i in range(code_30.n):
        e = np.zeros(code_30.n, dtype=np.uint8)
        e[i] = 1
        s = (hz.astype(int) @ e) % 2
        dec = bp.bp_decode(code_30.hz, BitVector.from_dense(s), prior, cfg)
        w = int(dec.hard.to_dense().sum())
        ok = dec.converged and w <= _min_weight_le2(hz, s)
        hits += ok
    assert hits >= 27  # >= 90% of 30


def _min_weight_le2(h, s):
    n = h.shape[1]
    for x in range(n):
        e = np.zeros(n, dtype=np.uint8)
        e[x] = 1
        if np.array_equal((h.astype(int) @ e) % 2, s):
            return 1
    for a in range(n):
        for b in range(a + 1, n):
            e = np.zeros(n, dtype=np.uint8)
            e[a] = e[b] = 1
            if np.array_equal((h.astype(int) @ e) % 2, s):
                return 2
    return 3


def test_minsum_agrees_with_sumproduct_on_repetition():
    ms = BpConfig(max_iters=16, method="min_sum", ms_scaling=1.0)
    sp = BpConfig(max_iters=16, method="sum_product")
    for true_bits in ([0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]):
        e = np.array(true_bits, dtype=np.uint8)
        s = BitVector.from_dense((REP3.to_dense().astype(int) @ e) % 2)
        h1 = bp.bp_decode(REP3, s, 2.0, ms).hard
        h2 = bp.bp_decode(REP3, s, 2.0, sp).hard
        assert h1 == h2


def test_serial_determinism(code_30):
    rng = np.random.default_rng(1)
    e = noise.sample_depolarizing(code_30.n, 0.1, rng)
    syn = noise.syndrome_of(code_30, e)
    cfg = BpConfig(max_iters=24)
    a = bp.bp_decode(code_30.hz, syn.sz, 3.0, cfg)
    b = bp.bp_decode(code_30.hz, syn.sz, 3.0, cfg)
    assert np.array_equal(a.llr, b.llr)
    assert a.hard == b.hard and a.iters_used == b.iters_used


def test_batch_matches_single(code_30):
    rng = np.random.default_rng(2)
    cfg = BpConfig(max_iters=12)
    dec = BatchBpDecoder(code_30.hz, cfg)
    prior = bp.prior_llr_from_p(0.06)
    syns = []
    for _ in range(32):
        e = noise.sample_depolarizing(code_30.n, 0.08, rng)
        syns.append(noise.syndrome_of(code_30, e).sz.to_dense())
    syns = np.array(syns)
    hard, llr, conv, iters = dec.decode_batch(syns, prior)
    for i in range(len(syns)):
        one = bp.bp_decode(code_30.hz, BitVector.from_dense(syns[i]), prior, cfg)
        assert np.array_equal(hard[i], one.hard.to_dense()), i
        assert np.allclose(llr[i], one.llr), i
        assert conv[i] == one.converged and iters[i] == one.iters_used


def test_decode_css_zero_and_consistency(code_30):
    cfg = BpConfig(max_iters=20)
    zero = noise.Syndrome(BitVector.zeros(code_30.hx.rows),
                          BitVector.zeros(code_30.hz.rows))
    e_hat, _ = bp.decode_css(code_30, zero, 0.05, cfg)
    assert e_hat.ex.is_zero() and e_hat.ez.is_zero()

    rng = np.random.default_rng(3)
    recovered = 0
    for _ in range(30):
        e = noise.sample_depolarizing(code_30.n, 0.03, rng)
        syn = noise.syndrome_of(code_30, e)
        e_hat, (sx_dec, sz_dec) = bp.decode_css(code_30, syn, 0.03, cfg)
        if sx_dec.converged and sz_dec.converged:
            again = noise.syndrome_of(code_30, e_hat)
            assert again.sx == syn.sx and again.sz == syn.sz
            recovered += 1
    assert recovered >= 25  # most easy cases converge


def test_degenerate_prior_still_flagged(code_30):
    # near-zero p gives a huge prior; decoder must return a flagged result
    rng = np.random.default_rng(4)
    e = noise.sample_depolarizing(code_30.n, 0.15, rng)
    syn = noise.syndrome_of(code_30, e)
    cfg = BpConfig(max_iters=4)
    prior = bp.prior_llr_from_p(1e-9)  # clamped to +25
    dec = bp.bp_decode(code_30.hz, syn.sz, prior, cfg)
    assert isinstance(dec.converged, bool)
    if dec.converged:
        got = (code_30.hz.to_dense().astype(int) @ dec.hard.to_dense()) % 2
        assert np.array_equal(got, syn.sz.to_dense())
