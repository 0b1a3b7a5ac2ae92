"""Code construction: registry validity, CSS invariants, logical bases."""

import json

import numpy as np
import pytest

from qdeck import codes, gf2
from qdeck.codes import CodeConstructionError, CodeSpec, Monomial

from conftest import enumerate_rowspace, oracle_rank


def test_registry_has_all_seven(registry):
    names = {s.name for s in registry}
    expected = {"[[72,12,6]]", "[[90,8,10]]", "[[144,12,12]]", "[[288,12,18]]",
                "[[756,16,<=34]]", "[[30,4,6]]", "[[154,6,16]]"}
    assert expected <= names


def test_degenerate_spec_rejected():
    spec = CodeSpec(name="deg", family="bb", lx=1, ly=1,
                    poly_a=(Monomial(0, 0),), poly_b=(Monomial(0, 0),),
                    expected_k=0)
    with pytest.raises(CodeConstructionError, match="degenerate"):
        codes.build_bb_code(spec)


def test_expected_k_mismatch_reports_both():
    spec = CodeSpec(name="[[72,12,6]]", family="bb", lx=6, ly=6,
                    poly_a=(Monomial(3, 0), Monomial(0, 1), Monomial(0, 2)),
                    poly_b=(Monomial(0, 3), Monomial(1, 0), Monomial(2, 0)),
                    expected_k=10)
    with pytest.raises(CodeConstructionError) as err:
        codes.build_bb_code(spec)
    assert "12" in str(err.value) and "10" in str(err.value)


def test_coprime_requires_coprime_dimensions():
    with pytest.raises(CodeConstructionError, match="gcd"):
        CodeSpec(name="bad", family="coprime_bb", lx=4, ly=6,
                 poly_a=(Monomial(0, 0),), poly_b=(Monomial(1, 1),),
                 expected_k=2)


def test_duplicate_monomials_rejected():
    with pytest.raises(CodeConstructionError, match="duplicate"):
        CodeSpec(name="dup", family="bb", lx=3, ly=3,
                 poly_a=(Monomial(1, 0), Monomial(4, 0)),  # 4 mod 3 == 1
                 poly_b=(Monomial(0, 1),), expected_k=2)


def test_small_bb_code_k_oracle(registry):
    spec = codes.get_spec(registry, "[[72,12,6]]")
    code = codes.build_bb_code(spec)
    assert code.n == 72
    hx = code.hx.to_dense()
    hz = code.hz.to_dense()
    assert oracle_rank(hx) == 30
    assert code.k == 72 - oracle_rank(hx) - oracle_rank(hz) == 12


def test_coprime_code_k_oracle(registry):
    code = codes.build_code(codes.get_spec(registry, "[[30,4,6]]"))
    assert code.n == 30
    assert code.k == 30 - oracle_rank(code.hx.to_dense()) \
        - oracle_rank(code.hz.to_dense()) == 4


def test_css_orthogonality_all_small(registry):
    for name in ("[[30,4,6]]", "[[72,12,6]]", "[[90,8,10]]", "[[144,12,12]]"):
        code = codes.build_code(codes.get_spec(registry, name))
        prod = (code.hx.to_dense().astype(int) @ code.hz.to_dense().T.astype(int)) % 2
        assert not prod.any(), name


def test_row_weight_regularity(registry):
    for name in ("[[30,4,6]]", "[[72,12,6]]", "[[154,6,16]]"):
        spec = codes.get_spec(registry, name)
        code = codes.build_code(spec)
        weights = set(code.hx.to_dense().sum(axis=1).tolist())
        assert weights == {len(spec.poly_a) + len(spec.poly_b)}


def test_deterministic_rebuild(registry):
    spec = codes.get_spec(registry, "[[30,4,6]]")
    a = codes.build_code(spec)
    b = codes.build_code(spec)
    assert a.hx == b.hx and a.hz == b.hz
    assert a.lx_ops == b.lx_ops and a.lz_ops == b.lz_ops


def test_logicals_in_kernel_not_stabilizer(code_30):
    # each X-logical commutes with all Z-checks and is not a stabilizer
    hz = code_30.hz.to_dense()
    stab = enumerate_rowspace(code_30.hx.to_dense())
    for i in range(code_30.k):
        row = code_30.lx_ops.row(i).to_dense()
        assert not ((hz.astype(int) @ row) % 2).any()
        assert row.tobytes() not in stab


def test_logical_pairing_identity(code_30, code_72):
    for code in (code_30, code_72):
        pairing = gf2.matmul_mod2(code.lx_ops, code.lz_ops.transpose())
        assert pairing == gf2.BitMatrix.identity(code.k)
        assert gf2.rank(pairing) == code.k


def test_compute_logicals_k_zero():
    # full-rank pair on 2 qubits: no logical qubits survive
    hx = gf2.BitMatrix.from_dense([[1, 1]])
    hz = gf2.BitMatrix.from_dense([[1, 1]])
    lx, lz = codes.compute_logicals(hx, hz)
    assert lx.rows == 0 and lz.rows == 0


def test_registry_empty_file(tmp_path):
    path = tmp_path / "empty.json"
    path.write_text("")
    assert codes.load_code_registry(path) == []


def test_registry_rejects_non_coprime(tmp_path):
    bad = [{
        "name": "bad", "family": "coprime_bb", "lx": 4, "ly": 6,
        "poly_a": [[0, 0]], "poly_b": [[1, 1]], "expected_k": 2,
    }]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    with pytest.raises(CodeConstructionError, match="bad"):
        codes.load_code_registry(path)


def test_registry_names_offending_spec(tmp_path):
    bad = [{"name": "broken-entry", "family": "bb", "lx": 2}]
    path = tmp_path / "broken.json"
    path.write_text(json.dumps(bad))
    with pytest.raises(CodeConstructionError, match="broken-entry"):
        codes.load_code_registry(path)


def test_monomial_reduction():
    spec = CodeSpec(name="red", family="bb", lx=3, ly=4,
                    poly_a=(Monomial(5, 9),), poly_b=(Monomial(0, 1),),
                    expected_k=99)
    assert spec.poly_a == (Monomial(2, 1),)
