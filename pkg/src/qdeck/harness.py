"""End-to-end evaluation: failure judgment, LER estimates, decoder sweeps.

A decoding trial fails when the residual error e_true XOR e_hat either
leaves a nonzero syndrome or anticommutes with a logical operator; success
is exactly membership of the residual in the stabilizer group.  LER is
block-level by default (any logical flip in the block counts once); a
per-qubit variant is available for comparison.

Shot noise on LER is reported with 95% Wilson intervals, kept separate
from the decoder's own Monte Carlo uncertainty bounds: sweeps emit one row
per (p, bound_variant).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import quba as quba_mod
from .bp import BatchBpDecoder, BpConfig, prior_llr_from_p
from .codes import CssCode
from .noise import PauliError
from .osd import OsdInput, osd0
from .gf2 import BitVector

_WILSON_Z = 1.959963984540054  # two-sided 95%


def wilson_interval(failures: int, trials: int, z: float = _WILSON_Z) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 0 <= failures <= trials:
        raise ValueError(f"failures {failures} outside [0, {trials}]")
    zz = z * z
    center = (failures + zz / 2.0) / (trials + zz)
    half = (z / (trials + zz)) * math.sqrt(
        failures * (trials - failures) / trials + zz / 4.0
    )
    lo = 0.0 if failures == 0 else max(0.0, center - half)
    hi = 1.0 if failures == trials else min(1.0, center + half)
    return lo, hi


@dataclass(frozen=True)
class LerEstimate:
    p: float
    trials: int
    failures: int
    ler: float
    wilson_lo: float
    wilson_hi: float
    bound_variant: str = "none"  # mean / lower / upper for MC decoders

    @classmethod
    def from_counts(cls, p, trials, failures, bound_variant="none") -> "LerEstimate":
        lo, hi = wilson_interval(failures, trials)
        return cls(p=float(p), trials=trials, failures=int(failures),
                   ler=failures / trials, wilson_lo=lo, wilson_hi=hi,
                   bound_variant=bound_variant)


@dataclass(frozen=True)
class _CodeArrays:
    hx: np.ndarray
    hz: np.ndarray
    lx: np.ndarray
    lz: np.ndarray


_code_arrays_cache: dict[int, _CodeArrays] = {}


def _arrays(code: CssCode) -> _CodeArrays:
    key = id(code)
    if key not in _code_arrays_cache:
        _code_arrays_cache[key] = _CodeArrays(
            hx=code.hx.to_dense(), hz=code.hz.to_dense(),
            lx=code.lx_ops.to_dense(), lz=code.lz_ops.to_dense(),
        )
    return _code_arrays_cache[key]


def _mod2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (a.astype(np.float32) @ b.astype(np.float32).T).astype(np.int64) & 1


def logical_failures(code: CssCode, ex_true, ez_true, ex_hat, ez_hat) -> np.ndarray:
    """Per-trial failure flags for (trials, n) binary component arrays."""
    arr = _arrays(code)
    rex = np.asarray(ex_true, dtype=np.uint8) ^ np.asarray(ex_hat, dtype=np.uint8)
    rez = np.asarray(ez_true, dtype=np.uint8) ^ np.asarray(ez_hat, dtype=np.uint8)
    syn_bad = _mod2(rez, arr.hx).any(axis=1) | _mod2(rex, arr.hz).any(axis=1)
    log_bad = _mod2(rex, arr.lz).any(axis=1) | _mod2(rez, arr.lx).any(axis=1)
    return syn_bad | log_bad


def logical_flip_counts(code: CssCode, ex_true, ez_true, ex_hat, ez_hat) -> np.ndarray:
    """Per-trial count of flipped logical qubits (the per-qubit metric).

    A trial with a nonzero residual syndrome counts as k flips: the block
    is lost, so every logical qubit is charged.
    """
    arr = _arrays(code)
    rex = np.asarray(ex_true, dtype=np.uint8) ^ np.asarray(ex_hat, dtype=np.uint8)
    rez = np.asarray(ez_true, dtype=np.uint8) ^ np.asarray(ez_hat, dtype=np.uint8)
    syn_bad = _mod2(rez, arr.hx).any(axis=1) | _mod2(rex, arr.hz).any(axis=1)
    flips = (_mod2(rex, arr.lz) | _mod2(rez, arr.lx)).sum(axis=1)
    return np.where(syn_bad, code.k, flips)


def is_logical_failure(code: CssCode, e_true: PauliError, e_hat: PauliError) -> bool:
    """True unless e_true XOR e_hat lies in the stabilizer group."""
    if e_true.n != code.n or e_hat.n != code.n:
        raise ValueError("error length does not match the code")
    return bool(logical_failures(
        code,
        e_true.ex.to_dense()[None, :], e_true.ez.to_dense()[None, :],
        e_hat.ex.to_dense()[None, :], e_hat.ez.to_dense()[None, :],
    )[0])


# ---------------------------------------------------------------------------
# decoders
# ---------------------------------------------------------------------------

DECODER_NAMES = ("bp", "bp_osd", "quba", "quba_osd")


def _clamped_prior(p: float) -> float:
    return prior_llr_from_p(min(max(p, 1e-9), 0.749), "x")


class BpPipeline:
    """Split-channel BP, optionally followed by OSD-0 repair."""

    def __init__(self, code: CssCode, cfg: BpConfig, use_osd: bool):
        self.code = code
        self.cfg = cfg
        self.use_osd = use_osd
        self.dec_x = BatchBpDecoder(code.hz, cfg)  # X errors from Z checks
        self.dec_z = BatchBpDecoder(code.hx, cfg)
        self.name = "bp_osd" if use_osd else "bp"
        self.variants = ("none",)

    def _component(self, dec, h, syn, prior):
        hard, llr, conv, _ = dec.decode_batch(syn, prior)
        if self.use_osd:
            for i in np.nonzero(~conv)[0]:
                fix = osd0(OsdInput(h=h, s=BitVector.from_dense(syn[i]),
                                    reliability=-llr[i]))
                hard[i] = fix.to_dense()
        return hard

    def decode_batch(self, sx, sz, p) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        prior = _clamped_prior(p)
        ex_hat = self._component(self.dec_x, self.code.hz, sz, prior)
        ez_hat = self._component(self.dec_z, self.code.hx, sx, prior)
        if self.use_osd:
            _assert_syndrome_consistent(self.code, ex_hat, ez_hat, sx, sz, self.name)
        return {"none": (ex_hat, ez_hat)}


class QubaPipeline:
    """Monte Carlo QuBA decisions on mean/lower/upper surfaces (+ OSD)."""

    def __init__(self, code: CssCode, model: quba_mod.QubaModel, mc_passes: int,
                 use_osd: bool, seed: int = 0, bounds=quba_mod.BOUNDS,
                 chunk: int = 256):
        self.code = code
        self.model = model
        self.graph = quba_mod.build_decoding_graph(code)
        self.mc_passes = mc_passes
        self.use_osd = use_osd
        self.rng = np.random.default_rng(np.random.SeedSequence((seed, 40_993)))
        self.name = "quba_osd" if use_osd else "quba"
        self.variants = tuple(bounds)
        self.chunk = chunk

    def decode_batch(self, sx, sz, p) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        trials = sx.shape[0]
        n = self.code.n
        out = {b: (np.zeros((trials, n), np.uint8), np.zeros((trials, n), np.uint8))
               for b in self.variants}
        syn = np.concatenate([sx, sz], axis=1)
        for lo in range(0, trials, self.chunk):
            hi = min(trials, lo + self.chunk)
            pred = quba_mod.mc_predict_batch(
                self.model, self.graph, syn[lo:hi], self.mc_passes, self.rng)
            for b in self.variants:
                if self.use_osd:
                    ex_hat, ez_hat = self._osd_decode(pred, hi - lo, sx[lo:hi],
                                                      sz[lo:hi], b)
                else:
                    ex_hat, ez_hat = quba_mod.decide_batch(pred, hi - lo, n, b)
                out[b][0][lo:hi] = ex_hat
                out[b][1][lo:hi] = ez_hat
        if self.use_osd:
            for b in self.variants:
                _assert_syndrome_consistent(self.code, out[b][0], out[b][1],
                                            sx, sz, self.name)
        return out

    def _osd_decode(self, pred, batch, sx, sz, bound):
        surface = getattr(pred, bound).reshape(batch, self.code.n, 4)
        rel_x = surface[:, :, 1] + surface[:, :, 3]  # P(X) + P(Y)
        rel_z = surface[:, :, 2] + surface[:, :, 3]  # P(Z) + P(Y)
        n = self.code.n
        ex_hat = np.zeros((batch, n), np.uint8)
        ez_hat = np.zeros((batch, n), np.uint8)
        for i in range(batch):
            ex_hat[i] = osd0(OsdInput(h=self.code.hz,
                                      s=BitVector.from_dense(sz[i]),
                                      reliability=rel_x[i])).to_dense()
            ez_hat[i] = osd0(OsdInput(h=self.code.hx,
                                      s=BitVector.from_dense(sx[i]),
                                      reliability=rel_z[i])).to_dense()
        return ex_hat, ez_hat


def _assert_syndrome_consistent(code, ex_hat, ez_hat, sx, sz, name):
    arr = _arrays(code)
    ok = (np.array_equal(_mod2(ez_hat, arr.hx), sx.astype(np.int64))
          and np.array_equal(_mod2(ex_hat, arr.hz), sz.astype(np.int64)))
    if not ok:
        raise RuntimeError(
            f"{name}: OSD output violated the measured syndrome (decoder bug)"
        )


def make_decoder(code: CssCode, decoder: str, bp_cfg: BpConfig | None = None,
                 model: quba_mod.QubaModel | None = None,
                 model_path=None, mc_passes: int = 10, seed: int = 0):
    """Build a decoder pipeline by name."""
    if decoder not in DECODER_NAMES:
        raise ValueError(f"unknown decoder {decoder!r}; choose from {DECODER_NAMES}")
    if decoder in ("bp", "bp_osd"):
        return BpPipeline(code, bp_cfg or BpConfig(), use_osd=decoder == "bp_osd")
    if model is None:
        if model_path is None:
            raise ValueError(f"decoder {decoder!r} needs a model or model_path")
        model = quba_mod.load_model(model_path)
    return QubaPipeline(code, model, mc_passes, use_osd=decoder == "quba_osd",
                        seed=seed)


# ---------------------------------------------------------------------------
# LER estimation and sweeps
# ---------------------------------------------------------------------------


def sample_error_batch(code: CssCode, p: float, trials: int,
                       rng: np.random.Generator):
    """(ex, ez, sx, sz) arrays for `trials` depolarizing draws at rate p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    n = code.n
    errs = rng.random((trials, n)) < p
    kind = rng.integers(0, 3, size=(trials, n))
    ex = (errs & (kind != 2)).astype(np.uint8)
    ez = (errs & (kind != 0)).astype(np.uint8)
    arr = _arrays(code)
    sx = _mod2(ez, arr.hx).astype(np.uint8)
    sz = _mod2(ex, arr.hz).astype(np.uint8)
    return ex, ez, sx, sz


def evaluate_ler(code: CssCode, decoder, p: float, trials: int, seed: int,
                 per_qubit: bool = False) -> list[LerEstimate]:
    """Monte Carlo LER at one physical error rate; deterministic per seed.

    Returns one estimate per decoder bound variant (a single "none" row
    for BP-family decoders, mean/lower/upper for MC decoders).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 61_981)))
    ex, ez, sx, sz = sample_error_batch(code, p, trials, rng)
    results = decoder.decode_batch(sx, sz, p)
    out = []
    for variant in decoder.variants:
        ex_hat, ez_hat = results[variant]
        if per_qubit:
            flips = logical_flip_counts(code, ex, ez, ex_hat, ez_hat)
            fails = int(flips.sum())
            est = LerEstimate(p=float(p), trials=trials * code.k, failures=fails,
                              ler=fails / (trials * code.k),
                              wilson_lo=wilson_interval(fails, trials * code.k)[0],
                              wilson_hi=wilson_interval(fails, trials * code.k)[1],
                              bound_variant=variant)
        else:
            fails = int(logical_failures(code, ex, ez, ex_hat, ez_hat).sum())
            est = LerEstimate.from_counts(p, trials, fails, variant)
        out.append(est)
    return out


@dataclass
class SweepConfig:
    code: str
    decoder: str
    p_list: list[float]
    trials: int
    seed: int = 0
    model_path: str | None = None
    mc_passes: int = 10
    model_iters: int | None = None   # learned-model iteration budget
    bp_iters: int | None = None      # defaults to model_iters // 2, else 32
    bp_method: str = "min_sum"
    ms_scaling: float = 0.725
    bp_schedule: str = "serial"
    per_qubit: bool = False

    def __post_init__(self):
        if self.decoder not in DECODER_NAMES:
            raise ValueError(f"unknown decoder {self.decoder!r}")
        for p in self.p_list:
            if not 0.0 <= p < 0.75:
                raise ValueError(f"p values must be in [0, 0.75), got {p}")
        if self.trials < 1 and self.p_list:
            raise ValueError("trials must be >= 1")

    def bp_config(self) -> BpConfig:
        iters = self.bp_iters
        if iters is None:
            iters = self.model_iters // 2 if self.model_iters else 32
        return BpConfig(max_iters=iters, method=self.bp_method,
                        ms_scaling=self.ms_scaling, schedule=self.bp_schedule)

    @classmethod
    def from_json(cls, path) -> "SweepConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(**json.load(fh))


SWEEP_COLUMNS = ("p", "trials", "failures", "ler", "wilson_lo", "wilson_hi",
                 "decoder", "code", "seed", "bound_variant")


def sweep(cfg: SweepConfig, code: CssCode, out_path,
          model: quba_mod.QubaModel | None = None) -> list[LerEstimate]:
    """Run the configured decoder across p values and write the CSV."""
    if code.name != cfg.code:
        raise ValueError(f"config names code {cfg.code!r}, got {code.name!r}")
    decoder = make_decoder(code, cfg.decoder, bp_cfg=cfg.bp_config(), model=model,
                           model_path=cfg.model_path, mc_passes=cfg.mc_passes,
                           seed=cfg.seed)
    if cfg.model_iters and isinstance(decoder, QubaPipeline):
        decoder.model.n_iters = cfg.model_iters
    rows: list[LerEstimate] = []
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for p in sorted(cfg.p_list):
            for est in evaluate_ler(code, decoder, p, cfg.trials, cfg.seed,
                                    per_qubit=cfg.per_qubit):
                rows.append(est)
                w.writerow([repr(est.p), est.trials, est.failures, repr(est.ler),
                            repr(est.wilson_lo), repr(est.wilson_hi),
                            decoder.name, code.name, cfg.seed,
                            est.bound_variant])
    return rows
