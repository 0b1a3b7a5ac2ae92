"""Depolarizing sampling, syndromes, class encoding, dataset files."""

import numpy as np
import pytest

from qdeck import noise
from qdeck.gf2 import BitVector
from qdeck.noise import PauliError, classes_to_pauli, error_classes


def test_p_zero_is_identity():
    rng = np.random.default_rng(0)
    e = noise.sample_depolarizing(20, 0.0, rng)
    assert e.ex.is_zero() and e.ez.is_zero()


def test_p_out_of_range():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        noise.sample_depolarizing(4, 1.5, rng)


def test_xyz_ratio_at_p_one():
    rng = np.random.default_rng(1)
    n = 10_000
    e = noise.sample_depolarizing(n, 1.0, rng)
    cls = error_classes(e)
    counts = np.bincount(cls, minlength=4)
    assert counts[0] == 0
    # 3-sigma multinomial bounds around n/3
    sigma = np.sqrt(n * (1 / 3) * (2 / 3))
    for c in counts[1:]:
        assert abs(c - n / 3) < 3 * sigma


def test_error_fraction_binomial():
    rng = np.random.default_rng(2)
    n = 100_000
    p = 0.1
    e = noise.sample_depolarizing(n, p, rng)
    frac = (e.ex.to_dense() | e.ez.to_dense()).mean()
    assert abs(frac - p) < 3 * np.sqrt(p * (1 - p) / n)


def test_syndrome_of_zero_error(code_30):
    syn = noise.syndrome_of(code_30, PauliError.identity(code_30.n))
    assert syn.is_zero()


def test_syndrome_single_x_error_reads_column(code_30):
    hz = code_30.hz.to_dense()
    for i in (0, 7, 29):
        ex = np.zeros(code_30.n, dtype=np.uint8)
        ex[i] = 1
        syn = noise.syndrome_of(code_30, PauliError.from_dense(ex, np.zeros_like(ex)))
        assert np.array_equal(syn.sz.to_dense(), hz[:, i])
        assert syn.sx.is_zero()


def test_syndrome_y_error_hits_both(code_30):
    hx = code_30.hx.to_dense()
    hz = code_30.hz.to_dense()
    i = 11
    bit = np.zeros(code_30.n, dtype=np.uint8)
    bit[i] = 1
    syn = noise.syndrome_of(code_30, PauliError.from_dense(bit, bit))
    assert np.array_equal(syn.sz.to_dense(), hz[:, i])
    assert np.array_equal(syn.sx.to_dense(), hx[:, i])


def test_syndrome_linearity_weight_two(code_30):
    # additive over single-qubit errors, exhaustive on a sample of pairs
    rng = np.random.default_rng(3)
    n = code_30.n
    singles = []
    for i in range(n):
        for cls in (1, 2, 3):
            lab = np.zeros(n, dtype=np.uint8)
            lab[i] = cls
            singles.append(classes_to_pauli(lab))
    for _ in range(200):
        a, b = rng.integers(0, len(singles), 2)
        ea, eb = singles[a], singles[b]
        sa = noise.syndrome_of(code_30, ea)
        sb = noise.syndrome_of(code_30, eb)
        sab = noise.syndrome_of(code_30, ea ^ eb)
        assert sab.sx == sa.sx ^ sb.sx
        assert sab.sz == sa.sz ^ sb.sz


def test_stabilizer_rows_have_zero_syndrome(code_30):
    # X-type stabilizers come from hx rows; Z-type from hz rows
    for i in range(code_30.hx.rows):
        row = code_30.hx.row(i).to_dense()
        e = PauliError.from_dense(row, np.zeros_like(row))
        assert noise.syndrome_of(code_30, e).is_zero()
    for i in range(code_30.hz.rows):
        row = code_30.hz.row(i).to_dense()
        e = PauliError.from_dense(np.zeros_like(row), row)
        assert noise.syndrome_of(code_30, e).is_zero()


def test_error_class_roundtrip():
    for ex in (0, 1):
        for ez in (0, 1):
            e = PauliError.from_dense([ex], [ez])
            cls = error_classes(e)
            expected = {(0, 0): 0, (1, 0): 1, (0, 1): 2, (1, 1): 3}[(ex, ez)]
            assert cls[0] == expected
            back = classes_to_pauli(cls)
            assert back.ex == e.ex and back.ez == e.ez
    assert noise.CLASS_NAMES == ("I", "X", "Z", "Y")


def test_dataset_determinism(tmp_path, code_30):
    p1 = tmp_path / "a.ds"
    p2 = tmp_path / "b.ds"
    noise.generate_dataset(code_30, 25, 0.15, 7, p1)
    noise.generate_dataset(code_30, 25, 0.15, 7, p2)
    assert p1.read_bytes() == p2.read_bytes()
    p3 = tmp_path / "c.ds"
    noise.generate_dataset(code_30, 25, 0.15, 8, p3)
    assert p1.read_bytes() != p3.read_bytes()


def test_dataset_pmax_respected(tmp_path, code_30):
    path = tmp_path / "d.ds"
    noise.generate_dataset(code_30, 200, 0.15, 1, path)
    ds = noise.load_dataset(path, code_30)
    assert (ds.p <= 0.15).all() and (ds.p >= 0).all()
    assert ds.header.mode == 0 and ds.header.p_param == 0.15


def test_dataset_syndromes_recompute(tmp_path, code_30):
    path = tmp_path / "e.ds"
    noise.generate_dataset(code_30, 100, 0.12, 2, path)
    ds = noise.load_dataset(path, code_30, validate_sample=100)
    for i in range(len(ds)):
        _, err, syn = ds.record(i)
        again = noise.syndrome_of(code_30, err)
        assert again.sx == syn.sx and again.sz == syn.sz


def test_dataset_fixed_p(tmp_path, code_30):
    path = tmp_path / "f.ds"
    noise.generate_dataset(code_30, 40, 0.15, 3, path, fixed_p=0.05)
    ds = noise.load_dataset(path, code_30)
    assert (ds.p == 0.05).all()
    assert ds.header.mode == 1


def test_dataset_wrong_code_rejected(tmp_path, code_30, code_72):
    path = tmp_path / "g.ds"
    noise.generate_dataset(code_30, 10, 0.1, 4, path)
    with pytest.raises(noise.DatasetFormatError):
        noise.load_dataset(path, code_72)


def test_dataset_bad_magic(tmp_path):
    path = tmp_path / "h.ds"
    path.write_bytes(b"NOT-A-DATASET")
    with pytest.raises(noise.DatasetFormatError):
        noise.load_dataset(path)


def test_dataset_invalid_args(tmp_path, code_30):
    with pytest.raises(ValueError):
        noise.generate_dataset(code_30, 0, 0.1, 0, tmp_path / "x.ds")
    with pytest.raises(ValueError):
        noise.generate_dataset(code_30, 5, 1.5, 0, tmp_path / "y.ds")
