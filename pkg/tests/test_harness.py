"""Failure judgment, Wilson intervals, LER evaluation, sweep CSV."""

import numpy as np
import pytest

from qdeck import harness, noise, quba
from qdeck.bp import BpConfig
from qdeck.harness import (LerEstimate, SweepConfig, evaluate_ler,
                           is_logical_failure, make_decoder, sweep,
                           wilson_interval)
from qdeck.noise import PauliError, classes_to_pauli

from conftest import enumerate_rowspace


def test_wilson_basic_properties():
    lo, hi = wilson_interval(0, 100)
    assert lo == 0.0 and 0.0 < hi < 0.06
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi
    with pytest.raises(ValueError):
        wilson_interval(5, 0)
    with pytest.raises(ValueError):
        wilson_interval(7, 5)


def test_wilson_contains_point_estimate():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(1, 500))
        f = int(rng.integers(0, n + 1))
        lo, hi = wilson_interval(f, n)
        assert lo <= f / n <= hi


def test_wilson_coverage():
    # >= 93% coverage over 1000 synthetic binomial experiments
    rng = np.random.default_rng(1)
    covered = 0
    for _ in range(1000):
        p = rng.uniform(0.01, 0.5)
        n = int(rng.integers(30, 400))
        f = rng.binomial(n, p)
        lo, hi = wilson_interval(f, n)
        covered += lo <= p <= hi
    assert covered >= 930


def test_failure_identity_and_perturbations(code_30):
    rng = np.random.default_rng(2)
    e = noise.sample_depolarizing(code_30.n, 0.1, rng)
    assert not is_logical_failure(code_30, e, e)

    # adding any stabilizer keeps success
    for i in range(code_30.hx.rows):
        row = code_30.hx.row(i).to_dense()
        stab = PauliError.from_dense(row, np.zeros_like(row))
        assert not is_logical_failure(code_30, e, e ^ stab)
    for i in range(code_30.hz.rows):
        row = code_30.hz.row(i).to_dense()
        stab = PauliError.from_dense(np.zeros_like(row), row)
        assert not is_logical_failure(code_30, e, e ^ stab)

    # adding any logical operator flips to failure
    for i in range(code_30.k):
        row = code_30.lx_ops.row(i).to_dense()
        log = PauliError.from_dense(row, np.zeros_like(row))
        assert is_logical_failure(code_30, e, e ^ log)
        row = code_30.lz_ops.row(i).to_dense()
        log = PauliError.from_dense(np.zeros_like(row), row)
        assert is_logical_failure(code_30, e, e ^ log)

    # residual syndrome also counts as failure
    bump = np.zeros(code_30.n, dtype=np.uint8)
    bump[3] = 1
    assert is_logical_failure(code_30, e, e ^ PauliError.from_dense(
        bump, np.zeros_like(bump)))


def test_failure_matches_coset_membership_oracle(code_30):
    # brute force: success iff both residual components live in the
    # matching stabilizer row spaces
    stab_x = enumerate_rowspace(code_30.hx.to_dense())
    stab_z = enumerate_rowspace(code_30.hz.to_dense())
    rng = np.random.default_rng(3)
    for _ in range(150):
        e_true = noise.sample_depolarizing(code_30.n, 0.1, rng)
        e_hat = noise.sample_depolarizing(code_30.n, 0.1, rng)
        res = e_true ^ e_hat
        in_group = (res.ex.to_dense().tobytes() in stab_x
                    and res.ez.to_dense().tobytes() in stab_z)
        assert is_logical_failure(code_30, e_true, e_hat) == (not in_group)


def test_random_stabilizer_invariance(code_30):
    rng = np.random.default_rng(4)
    hx = code_30.hx.to_dense()
    hz = code_30.hz.to_dense()
    decoder = make_decoder(code_30, "bp", bp_cfg=BpConfig(max_iters=8))
    e = noise.sample_depolarizing(code_30.n, 0.08, rng)
    for _ in range(100):
        cx = rng.integers(0, 2, hx.shape[0])
        cz = rng.integers(0, 2, hz.shape[0])
        sx_part = (cx @ hx) % 2
        sz_part = (cz @ hz) % 2
        stab = PauliError.from_dense(sx_part.astype(np.uint8),
                                     sz_part.astype(np.uint8))
        assert is_logical_failure(code_30, e, e ^ stab) is False


def test_evaluate_ler_p_zero(code_30):
    for name in ("bp", "bp_osd"):
        dec = make_decoder(code_30, name, bp_cfg=BpConfig(max_iters=8))
        (est,) = evaluate_ler(code_30, dec, 0.0, 100, seed=0)
        assert est.ler == 0.0 and est.failures == 0
        assert est.wilson_lo == 0.0


def test_evaluate_ler_deterministic(code_30):
    dec = make_decoder(code_30, "bp", bp_cfg=BpConfig(max_iters=10))
    a = evaluate_ler(code_30, dec, 0.05, 400, seed=3)[0]
    b = evaluate_ler(code_30, dec, 0.05, 400, seed=3)[0]
    assert a.failures == b.failures
    c = evaluate_ler(code_30, dec, 0.05, 400, seed=4)[0]
    assert (a.failures != c.failures) or (a.ler == c.ler)  # seeds differ


def test_bp_osd_not_worse_than_bp(code_72):
    cfg = BpConfig(max_iters=16)
    bp_dec = make_decoder(code_72, "bp", bp_cfg=cfg)
    osd_dec = make_decoder(code_72, "bp_osd", bp_cfg=cfg)
    a = evaluate_ler(code_72, bp_dec, 0.08, 600, seed=5)[0]
    b = evaluate_ler(code_72, osd_dec, 0.08, 600, seed=5)[0]
    assert b.failures <= a.failures


def test_quba_decoder_variants_run(code_30):
    model = quba.QubaModel(d_h=8, msg_hidden=16, heads=4, n_iters=2, seed=0)
    dec = make_decoder(code_30, "quba", model=model, mc_passes=2)
    ests = evaluate_ler(code_30, dec, 0.05, 40, seed=6)
    assert [e.bound_variant for e in ests] == ["mean", "lower", "upper"]
    for e in ests:
        assert 0.0 <= e.ler <= 1.0


def test_quba_osd_outputs_syndrome_consistent(code_30):
    model = quba.QubaModel(d_h=8, msg_hidden=16, heads=4, n_iters=2, seed=0)
    dec = make_decoder(code_30, "quba_osd", model=model, mc_passes=2)
    rng = np.random.default_rng(7)
    ex, ez, sx, sz = harness.sample_error_batch(code_30, 0.08, 30, rng)
    out = dec.decode_batch(sx, sz, 0.08)  # raises if inconsistent
    hx = code_30.hx.to_dense().astype(int)
    hz = code_30.hz.to_dense().astype(int)
    for variant, (ex_hat, ez_hat) in out.items():
        assert np.array_equal((ez_hat @ hx.T) % 2, sx.astype(int)), variant
        assert np.array_equal((ex_hat @ hz.T) % 2, sz.astype(int)), variant


def test_make_decoder_errors(code_30):
    with pytest.raises(ValueError, match="unknown decoder"):
        make_decoder(code_30, "magic")
    with pytest.raises(ValueError, match="model"):
        make_decoder(code_30, "quba")


def test_sweep_csv_deterministic(tmp_path, code_30):
    cfg = SweepConfig(code="[[30,4,6]]", decoder="bp", p_list=[0.05, 0.02],
                      trials=150, seed=1, bp_iters=8)
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    sweep(cfg, code_30, a)
    sweep(cfg, code_30, b)
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0] == ",".join(harness.SWEEP_COLUMNS)
    ps = [float(line.split(",")[0]) for line in lines[1:]]
    assert ps == sorted(ps)


def test_sweep_empty_p_list(tmp_path, code_30):
    cfg = SweepConfig(code="[[30,4,6]]", decoder="bp", p_list=[], trials=10)
    out = tmp_path / "empty.csv"
    rows = sweep(cfg, code_30, out)
    assert rows == []
    assert out.read_text().splitlines() == [",".join(harness.SWEEP_COLUMNS)]


def test_sweep_config_validation():
    with pytest.raises(ValueError):
        SweepConfig(code="x", decoder="nope", p_list=[0.1], trials=10)
    with pytest.raises(ValueError):
        SweepConfig(code="x", decoder="bp", p_list=[0.8], trials=10)
    cfg = SweepConfig(code="x", decoder="bp", p_list=[0.1], trials=10,
                      model_iters=40)
    assert cfg.bp_config().max_iters == 20  # half the learned model budget


def test_sweep_name_mismatch(tmp_path, code_30):
    cfg = SweepConfig(code="[[72,12,6]]", decoder="bp", p_list=[0.1], trials=5)
    with pytest.raises(ValueError, match="names code"):
        sweep(cfg, code_30, tmp_path / "x.csv")


def test_per_qubit_metric(code_30):
    dec = make_decoder(code_30, "bp", bp_cfg=BpConfig(max_iters=8))
    (est,) = evaluate_ler(code_30, dec, 0.05, 200, seed=8, per_qubit=True)
    assert est.trials == 200 * code_30.k
    assert 0.0 <= est.ler <= 1.0


def test_logical_flip_counts_charges_syndrome_failures(code_30):
    e = PauliError.identity(code_30.n)
    bad = np.zeros(code_30.n, dtype=np.uint8)
    bad[0] = 1  # residual with nonzero syndrome
    counts = harness.logical_flip_counts(
        code_30, e.ex.to_dense()[None], e.ez.to_dense()[None],
        bad[None], np.zeros_like(bad)[None])
    assert counts[0] == code_30.k


def test_ler_estimate_from_counts():
    est = LerEstimate.from_counts(0.05, 200, 10, "mean")
    assert est.ler == pytest.approx(0.05)
    assert est.wilson_lo <= est.ler <= est.wilson_hi
    assert est.bound_variant == "mean"
