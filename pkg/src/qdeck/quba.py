"""Bayesian attention graph decoder over the Tanner graph.

Architecture, per message-passing iteration:
  * all nodes start from one shared learnable embedding;
  * queries/keys come from variational linear layers with batchnorm,
    reshaped into 4 heads; per-edge scores LeakyReLU(<q_src, k_dst>)
    divided by a learnable temperature, normalized with a max-shifted
    scatter softmax at each destination;
  * values come from a deep variational MLP on [h_src, h_dst]; the
    attention-weighted messages are summed at each destination;
  * messages flow only check -> variable, so check nodes update from a
    zero aggregate, everyone through a shared LSTM cell on
    [aggregated message, static input], with a residual dropout;
  * a variational output layer reads 4-class logits (I, X, Z, Y) off the
    variable nodes at every iteration.

Training minimizes, averaged over iterations, a logical-consistency loss
built on the smooth parity surrogate |sin(pi x / 2)|, plus half-weighted
class and syndrome cross-entropies, plus an annealed KL of all
variational layers against the unit Gaussian prior.

Uncertainty comes from M Monte Carlo forward passes with fresh weight
draws at every iteration and active dropout, yielding per-qubit class
probability means, variances and 2-sigma bounds; argmax decoding can run
on the mean or on either bound surface.
"""

from __future__ import annotations

import copy
import csv
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .codes import CssCode
from .gf2 import BitVector
from .nn import tensor as T
from .noise import Dataset, PauliError, Syndrome, classes_to_pauli
from .nn.tensor import Tensor

CLASS_COUNT = 4
STATIC_WIDTH = 4
_EPS = 1e-7


# ---------------------------------------------------------------------------
# graph
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecodingGraph:
    """Tanner graph with directed check -> variable edges.

    Node ids: variables 0..n_var-1, then X-checks, then Z-checks.  Edges
    are sorted by destination (then source), which keeps scatter groups
    contiguous.
    """

    n_var: int
    n_check: int
    edge_src: np.ndarray  # (E,) check node ids
    edge_dst: np.ndarray  # (E,) variable node ids

    @property
    def n_nodes(self) -> int:
        return self.n_var + self.n_check

    @property
    def n_edges(self) -> int:
        return self.edge_src.shape[0]


def build_decoding_graph(code: CssCode) -> DecodingGraph:
    n = code.n
    hx = code.hx.to_dense()
    hz = code.hz.to_dense()
    rows_x, cols_x = np.nonzero(hx)
    rows_z, cols_z = np.nonzero(hz)
    src = np.concatenate([n + rows_x, n + hx.shape[0] + rows_z])
    dst = np.concatenate([cols_x, cols_z])
    order = np.lexsort((src, dst))
    return DecodingGraph(
        n_var=n,
        n_check=hx.shape[0] + hz.shape[0],
        edge_src=src[order].astype(np.int64),
        edge_dst=dst[order].astype(np.int64),
    )


@dataclass(frozen=True)
class BatchedGraph:
    """Edge/node index arrays for `batch` copies of one graph."""

    graph: DecodingGraph
    batch: int
    src_idx: np.ndarray
    dst_idx: np.ndarray
    var_rows: np.ndarray
    n_nodes: int


def batch_graph(graph: DecodingGraph, batch: int) -> BatchedGraph:
    n = graph.n_nodes
    offs = (np.arange(batch, dtype=np.int64) * n)[:, None]
    src = (graph.edge_src[None, :] + offs).reshape(-1)
    dst = (graph.edge_dst[None, :] + offs).reshape(-1)
    var_rows = (np.arange(graph.n_var, dtype=np.int64)[None, :] + offs).reshape(-1)
    return BatchedGraph(graph, batch, src, dst, var_rows, batch * n)


def static_features(graph: DecodingGraph, syn: Syndrome) -> np.ndarray:
    """Per-node width-4 inputs: checks (s, 1-s, 1, 0), variables (0,0,0,1)."""
    bits = np.concatenate([syn.sx.to_dense(), syn.sz.to_dense()])
    return static_features_batch(graph, bits[None, :])[0]


def static_features_batch(graph: DecodingGraph, syn_bits: np.ndarray) -> np.ndarray:
    """(B, n_check) syndrome bit rows -> (B, n_nodes, 4) static inputs."""
    syn_bits = np.asarray(syn_bits, dtype=np.float32)
    b = syn_bits.shape[0]
    if syn_bits.shape[1] != graph.n_check:
        raise ValueError(
            f"syndrome width {syn_bits.shape[1]} != checks {graph.n_check}"
        )
    feats = np.zeros((b, graph.n_nodes, STATIC_WIDTH), dtype=np.float32)
    feats[:, :graph.n_var, 3] = 1.0
    feats[:, graph.n_var:, 0] = syn_bits
    feats[:, graph.n_var:, 1] = 1.0 - syn_bits
    feats[:, graph.n_var:, 2] = 1.0
    return feats


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------


def _softplus_inv(y: float) -> float:
    return float(np.log(np.expm1(y)))


class QubaModel(nn.Module):
    """Edge-aware multi-head Bayesian attention decoder."""

    def __init__(self, d_h: int = 32, msg_hidden: int = 256, heads: int = 4,
                 n_iters: int = 40, dropout: float = 0.1, leaky_slope: float = 0.01,
                 n_edge: int = 32, seed: int = 0, dtype=np.float32):
        if d_h % heads:
            raise ValueError(f"d_h = {d_h} not divisible by heads = {heads}")
        rng = np.random.default_rng(seed)
        self.d_h = d_h
        self.msg_hidden = msg_hidden
        self.heads = heads
        self.d_head = d_h // heads
        self.n_iters = n_iters
        self.dropout_rate = dropout
        self.leaky_slope = leaky_slope
        self.n_edge = n_edge  # reserved width hyperparameter; unused by the forward

        self.e0 = T.parameter(rng.normal(0.0, 0.1, d_h), dtype)
        self.q_proj = nn.VariationalLinear(d_h, d_h, rng, dtype)
        self.k_proj = nn.VariationalLinear(d_h, d_h, rng, dtype)
        self.bn_q = nn.BatchNorm1d(d_h, dtype=dtype)
        self.bn_k = nn.BatchNorm1d(d_h, dtype=dtype)
        self.msg_net = [
            nn.VariationalLinear(2 * d_h, msg_hidden, rng, dtype),
            nn.VariationalLinear(msg_hidden, msg_hidden, rng, dtype),
            nn.VariationalLinear(msg_hidden, d_h, rng, dtype),
        ]
        self.lstm = nn.LSTMCell(d_h + STATIC_WIDTH, d_h, rng, dtype)
        self.out = nn.VariationalLinear(d_h, CLASS_COUNT, rng, dtype)
        self.drop = nn.Dropout(dropout)
        self.tau_raw = T.parameter(_softplus_inv(np.sqrt(self.d_head)), dtype)

    def arch(self) -> dict:
        return {
            "d_h": self.d_h, "msg_hidden": self.msg_hidden, "heads": self.heads,
            "n_iters": self.n_iters, "dropout": self.dropout_rate,
            "leaky_slope": self.leaky_slope, "n_edge": self.n_edge,
        }

    @classmethod
    def from_arch(cls, arch: dict, seed: int = 0) -> "QubaModel":
        return cls(
            d_h=arch["d_h"], msg_hidden=arch["msg_hidden"], heads=arch["heads"],
            n_iters=arch["n_iters"], dropout=arch["dropout"],
            leaky_slope=arch.get("leaky_slope", 0.01),
            n_edge=arch.get("n_edge", 32), seed=seed,
        )

    def kl(self) -> Tensor:
        total = None
        for layer in [self.q_proj, self.k_proj, *self.msg_net, self.out]:
            term = layer.kl(prior_var=1.0)
            total = term if total is None else T.add(total, term)
        return total

    def _message_values(self, h, bg, sample, dropout_on, rng):
        h_src = T.gather_rows(h, bg.src_idx)
        h_dst = T.gather_rows(h, bg.dst_idx)
        x = T.concat([h_src, h_dst], axis=1)
        for i, layer in enumerate(self.msg_net):
            x = layer.forward(x, sample, rng)
            if i + 1 < len(self.msg_net):
                x = T.leaky_relu(x, self.leaky_slope, inplace=True)
                x = T.dropout(x, self.dropout_rate, rng, dropout_on, inplace=True)
        return x, h_src, h_dst

    def forward(self, bg: BatchedGraph, feats: np.ndarray, *, sample: bool,
                train_mode: bool, rng: np.random.Generator | None = None,
                n_iters: int | None = None) -> list[Tensor]:
        """Run message passing; returns per-iteration variable logits.

        feats is the (n_nodes_total, 4) static input block.  `sample`
        draws fresh variational weights at every iteration; dropout is
        active exactly when `sample` is (Monte Carlo inference keeps both
        on); batchnorm uses batch statistics only in train_mode.
        """
        t_total = n_iters if n_iters is not None else self.n_iters
        if t_total < 1:
            raise ValueError(f"n_iters must be >= 1, got {t_total}")
        if feats.shape != (bg.n_nodes, STATIC_WIDTH):
            raise ValueError(f"feats shape {feats.shape} != ({bg.n_nodes}, 4)")
        if (sample or train_mode) and rng is None:
            raise ValueError("stochastic forward needs an rng")
        e_edges = bg.src_idx.shape[0]
        dt = self.e0.values.dtype
        feats_c = T.tensor(feats.astype(dt))
        dropout_on = sample or train_mode

        h = T.add(T.tensor(np.zeros((bg.n_nodes, self.d_h), dtype=dt)), self.e0)
        c = T.tensor(np.zeros((bg.n_nodes, self.d_h), dtype=dt))
        inv_tau = T.reciprocal(T.softplus(self.tau_raw))

        logits: list[Tensor] = []
        for _ in range(t_total):
            q = self.bn_q.forward(self.q_proj.forward(h, sample, rng), train_mode)
            k = self.bn_k.forward(self.k_proj.forward(h, sample, rng), train_mode)
            q_src = T.gather_rows(q, bg.src_idx)
            k_dst = T.gather_rows(k, bg.dst_idx)
            raw = T.sum_(
                T.reshape(T.mul(q_src, k_dst), (e_edges, self.heads, self.d_head)),
                axis=2,
            )
            scores = T.mul(T.leaky_relu(raw, self.leaky_slope, inplace=True), inv_tau)
            alpha = T.scatter_softmax(scores, bg.dst_idx)

            values, _, _ = self._message_values(h, bg, sample, dropout_on, rng)
            weighted = T.reshape(
                T.mul(
                    T.reshape(values, (e_edges, self.heads, self.d_head)),
                    T.reshape(alpha, (e_edges, self.heads, 1)),
                ),
                (e_edges, self.d_h),
            )
            agg = T.segment_sum(weighted, bg.dst_idx, bg.n_nodes)

            z = T.concat([agg, feats_c], axis=1)
            h_new, c = self.lstm.forward(z, h, c)
            h = T.add(T.dropout(h_new, self.dropout_rate, rng, dropout_on,
                                inplace=True), h)

            h_var = T.gather_rows(h, bg.var_rows)
            logits.append(self.out.forward(h_var, sample, rng))
        return logits


def quba_forward(model: QubaModel, graph: DecodingGraph, syn: Syndrome,
                 sample: bool, t_iters: int | None = None,
                 rng: np.random.Generator | None = None) -> list[Tensor]:
    """Single-syndrome forward; logits are (n_var, 4) per iteration."""
    bg = batch_graph(graph, 1)
    feats = static_features(graph, syn)
    return model.forward(bg, feats, sample=sample, train_mode=False,
                         rng=rng, n_iters=t_iters)


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CodeMatrices:
    """Dense float32 views of the code used inside the loss."""

    n: int
    hx_t: np.ndarray       # (n, mx)  X-checks applied to Z-components
    hz_t: np.ndarray       # (n, mz)
    x_consistency_t: np.ndarray  # (n, mz + k): [hz; lz]^T, hits ex_tot
    z_consistency_t: np.ndarray  # (n, mx + k): [hx; lx]^T, hits ez_tot


def code_matrices(code: CssCode) -> CodeMatrices:
    hx = code.hx.to_dense().astype(np.float32)
    hz = code.hz.to_dense().astype(np.float32)
    lx = code.lx_ops.to_dense().astype(np.float32)
    lz = code.lz_ops.to_dense().astype(np.float32)
    return CodeMatrices(
        n=code.n,
        hx_t=hx.T.copy(),
        hz_t=hz.T.copy(),
        x_consistency_t=np.vstack([hz, lz]).T.copy(),
        z_consistency_t=np.vstack([hx, lx]).T.copy(),
    )


def _soft_components(probs: Tensor, batch: int, n: int) -> tuple[Tensor, Tensor]:
    """P(X)+P(Y) and P(Z)+P(Y) per qubit, reshaped to (batch, n)."""
    ex = T.add(T.slice_cols(probs, 1, 2), T.slice_cols(probs, 3, 4))
    ez = T.add(T.slice_cols(probs, 2, 3), T.slice_cols(probs, 3, 4))
    return T.reshape(ex, (batch, n)), T.reshape(ez, (batch, n))


def _xor_relax(e_true: np.ndarray, e_soft: Tensor) -> Tensor:
    # e + p - 2 e p: exact XOR on binary inputs, affine in p elsewhere
    return T.add(T.sub(e_soft, T.mul(e_soft, 2.0 * e_true)), e_true)


def composite_loss(outputs: list[Tensor], mats: CodeMatrices,
                   ex_true: np.ndarray, ez_true: np.ndarray,
                   syn_bits: np.ndarray, labels: np.ndarray,
                   beta: float = 0.0, model: QubaModel | None = None) -> Tensor:
    """Iteration-averaged task loss plus the annealed KL regularizer.

    Per iteration: logical-consistency surrogate loss, plus half-weighted
    per-qubit class cross-entropy and syndrome binary cross-entropy.
    """
    batch, n = ex_true.shape
    ex_f = ex_true.astype(np.float32)
    ez_f = ez_true.astype(np.float32)
    flat_labels = labels.reshape(-1)
    syn_f = syn_bits.astype(np.float32)

    total = None
    for logits in outputs:
        lsm = T.log_softmax(logits)
        ce_e = T.neg(T.mean_(T.pick(lsm, flat_labels)))

        probs = T.exp(lsm)
        ex_soft, ez_soft = _soft_components(probs, batch, n)

        s_hat = T.parity_surrogate(T.concat(
            [T.matmul(ez_soft, mats.hx_t), T.matmul(ex_soft, mats.hz_t)], axis=1,
        ))
        ce_s = T.neg(T.mean_(T.add(
            T.mul(syn_f, T.log(T.add(s_hat, _EPS))),
            T.mul(1.0 - syn_f, T.log(T.add(T.sub(1.0, s_hat), _EPS))),
        )))

        ex_tot = _xor_relax(ex_f, ex_soft)
        ez_tot = _xor_relax(ez_f, ez_soft)
        ler = T.mean_(T.parity_surrogate(T.concat(
            [T.matmul(ex_tot, mats.x_consistency_t),
             T.matmul(ez_tot, mats.z_consistency_t)], axis=1,
        )))

        term = T.add(ler, T.add(T.mul(ce_e, 0.5), T.mul(ce_s, 0.5)))
        total = term if total is None else T.add(total, term)

    loss = T.mul(total, 1.0 / len(outputs))
    if beta:
        if model is None:
            raise ValueError("beta > 0 requires the model for its KL term")
        loss = T.add(loss, T.mul(model.kl(), float(beta)))
    return loss


def quba_loss(outputs: list[Tensor], e_true: PauliError, code: CssCode,
              beta: float = 0.0, model: QubaModel | None = None) -> Tensor:
    """Single-sample loss against a true error (batch form: composite_loss)."""
    from .noise import error_classes, syndrome_of

    mats = code_matrices(code)
    ex = e_true.ex.to_dense()[None, :]
    ez = e_true.ez.to_dense()[None, :]
    syn = syndrome_of(code, e_true)
    syn_bits = np.concatenate([syn.sx.to_dense(), syn.sz.to_dense()])[None, :]
    labels = error_classes(e_true)[None, :]
    return composite_loss(outputs, mats, ex, ez, syn_bits, labels, beta, model)


# ---------------------------------------------------------------------------
# Monte Carlo inference
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class McPrediction:
    """Per-qubit class probabilities from M stochastic forward passes."""

    mean: np.ndarray   # (n, 4)
    var: np.ndarray    # (n, 4)
    lower: np.ndarray  # clip(mean - 2 sd, 0, 1)
    upper: np.ndarray  # clip(mean + 2 sd, 0, 1)
    passes: int


def _softmax_np(x: np.ndarray) -> np.ndarray:
    s = x - x.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def mc_predict_batch(model: QubaModel, graph: DecodingGraph,
                     syn_bits: np.ndarray, passes: int,
                     rng: np.random.Generator, sample: bool = True,
                     n_iters: int | None = None) -> McPrediction:
    """MC over a batch of syndromes; arrays are (batch, n, 4) flattened rows.

    Returned arrays have shape (batch * n_var, 4); reshape as needed.
    """
    if passes < 1:
        raise ValueError(f"passes must be >= 1, got {passes}")
    batch = syn_bits.shape[0]
    bg = batch_graph(graph, batch)
    feats = static_features_batch(graph, syn_bits).reshape(bg.n_nodes, STATIC_WIDTH)
    # variance is accumulated shifted by the first draw, so identical passes
    # give exactly zero rather than cancellation noise
    pivot = None
    sum_d = None
    sum_dd = None
    with T.no_grad():
        for _ in range(passes):
            logits = model.forward(bg, feats, sample=sample, train_mode=False,
                                   rng=rng, n_iters=n_iters)[-1]
            p = _softmax_np(logits.values.astype(np.float64))
            if pivot is None:
                pivot = p
                sum_d = np.zeros_like(p)
                sum_dd = np.zeros_like(p)
            else:
                d = p - pivot
                sum_d += d
                sum_dd += d * d
    mean = pivot + sum_d / passes
    var = np.maximum(sum_dd / passes - (sum_d / passes) ** 2, 0.0)
    sd2 = 2.0 * np.sqrt(var)
    return McPrediction(
        mean=mean, var=var,
        lower=np.clip(mean - sd2, 0.0, 1.0),
        upper=np.clip(mean + sd2, 0.0, 1.0),
        passes=passes,
    )


def mc_predict(model: QubaModel, graph: DecodingGraph, syn: Syndrome,
               passes: int, rng: np.random.Generator,
               sample: bool = True, n_iters: int | None = None) -> McPrediction:
    """M independent stochastic forwards for one syndrome."""
    bits = np.concatenate([syn.sx.to_dense(), syn.sz.to_dense()])[None, :]
    return mc_predict_batch(model, graph, bits, passes, rng, sample, n_iters)


BOUNDS = ("mean", "lower", "upper")


def decide(pred: McPrediction, bound: str = "mean") -> PauliError:
    """Argmax decode on the chosen bound surface (ties -> lowest class)."""
    if bound not in BOUNDS:
        raise ValueError(f"bound must be one of {BOUNDS}, got {bound!r}")
    scores = getattr(pred, bound)
    labels = np.argmax(scores, axis=1).astype(np.uint8)
    return classes_to_pauli(labels)


def decide_batch(pred: McPrediction, batch: int, n: int, bound: str = "mean"):
    """(ex, ez) arrays of shape (batch, n) from flattened predictions."""
    if bound not in BOUNDS:
        raise ValueError(f"bound must be one of {BOUNDS}, got {bound!r}")
    labels = np.argmax(getattr(pred, bound), axis=1).reshape(batch, n)
    return (labels & 1).astype(np.uint8), (labels >> 1).astype(np.uint8)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int
    batch_size: int = 16
    lr: float = 5e-4
    lr_step: int | None = None      # default: floor(2/3 * epochs)
    lr_gamma: float = 0.5
    weight_decay: float = 1e-4
    clip_norm: float = 1.0
    kl_target: float = 1e-5
    kl_anneal_epochs: int = 10
    patience: int = 20
    val_mc_passes: int = 10
    sample_in_training: bool = True
    seed: int = 0
    restore_best: bool = True  # reload the best-validation snapshot at the end


def kl_beta(epoch: int, target: float = 1e-5, anneal_epochs: int = 10) -> float:
    """Linear KL annealing: beta(epoch) = target * min(1, epoch / anneal)."""
    return target * min(1.0, epoch / anneal_epochs)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_ler_mean: float
    val_ler_lower: float
    val_ler_upper: float
    lr: float
    beta: float
    phase: str = "train"
    domain: str = ""


def write_history_csv(path, history: list[EpochRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["phase", "domain", "epoch", "train_loss", "val_ler_mean",
                    "val_ler_lower", "val_ler_upper", "lr", "beta"])
        for r in history:
            w.writerow([r.phase, r.domain, r.epoch, repr(r.train_loss),
                        repr(r.val_ler_mean), repr(r.val_ler_lower),
                        repr(r.val_ler_upper), repr(r.lr), repr(r.beta)])


@dataclass
class _TrainData:
    syn: np.ndarray       # (count, mx+mz) uint8
    labels: np.ndarray    # (count, n) uint8
    ex: np.ndarray
    ez: np.ndarray


def _train_data(code: CssCode, ds: Dataset) -> _TrainData:
    h = ds.header
    if h.code_name != code.name or h.n != code.n:
        raise ValueError(
            f"dataset is for {h.code_name} (n={h.n}), not {code.name} (n={code.n})"
        )
    if h.mx != code.hx.rows or h.mz != code.hz.rows:
        raise ValueError(f"dataset check counts ({h.mx},{h.mz}) do not match code")
    return _TrainData(syn=ds.syndromes(), labels=ds.classes(), ex=ds.ex, ez=ds.ez)


def evaluate_model_ler(model: QubaModel, code: CssCode, graph: DecodingGraph,
                       data: _TrainData, passes: int, rng: np.random.Generator,
                       batch_size: int = 128, n_iters: int | None = None,
                       sample: bool = True) -> dict[str, float]:
    """Block LER of bound-surface decisions over a dataset, one value per bound."""
    from .harness import logical_failures

    count = data.syn.shape[0]
    fails = {b: 0 for b in BOUNDS}
    for lo in range(0, count, batch_size):
        hi = min(count, lo + batch_size)
        pred = mc_predict_batch(model, graph, data.syn[lo:hi], passes, rng,
                                sample=sample, n_iters=n_iters)
        for b in BOUNDS:
            ex_hat, ez_hat = decide_batch(pred, hi - lo, code.n, b)
            bad = logical_failures(code, data.ex[lo:hi], data.ez[lo:hi],
                                   ex_hat, ez_hat)
            fails[b] += int(bad.sum())
    return {b: fails[b] / count for b in BOUNDS}


def train_quba(model: QubaModel, code: CssCode, train_set: Dataset,
               val_set: Dataset, cfg: TrainConfig,
               phase: str = "train", domain: str = "",
               opt_state: nn.OptimizerState | None = None,
               epoch_offset: int = 0,
               history: list[EpochRecord] | None = None,
               ) -> tuple[QubaModel, list[EpochRecord]]:
    """Single-code training loop with LER checkpointing and early stopping.

    A zero-epoch budget returns the model unchanged.  Validation decodes
    with Monte Carlo bound surfaces every epoch; the best mean-surface
    LER snapshot is restored at the end.  Stops early when validation
    LER reaches zero or fails to improve for `patience` epochs.

    The annealed KL weight follows kl_beta but is normalized by the
    training-set size (the KL appears once per dataset in the ELBO while
    task terms are per-sample means); without the 1/N factor the
    regularizer is several times the task loss at these parameter counts
    and measurably destroys validation LER once annealing completes.
    """
    history = history if history is not None else []
    if cfg.epochs <= 0:
        return model, history
    train = _train_data(code, train_set)
    val = _train_data(code, val_set)
    graph = build_decoding_graph(code)
    mats = code_matrices(code)
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 7_041)))
    val_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 11_317)))

    params = model.named_parameters()
    if opt_state is None:
        opt_state = nn.OptimizerState(lr=cfg.lr, weight_decay=cfg.weight_decay)
    step_size = cfg.lr_step if cfg.lr_step else max(1, (2 * cfg.epochs) // 3)
    schedule = nn.StepDecaySchedule(cfg.lr, step_size, cfg.lr_gamma)

    count = train.syn.shape[0]
    bg_cache: dict[int, BatchedGraph] = {}
    best_ler = np.inf
    best_state = None
    since_best = 0

    for epoch in range(cfg.epochs):
        opt_state.lr = schedule.lr(epoch)
        beta = kl_beta(epoch_offset + epoch, cfg.kl_target,
                       cfg.kl_anneal_epochs) / count
        order = rng.permutation(count)
        losses = []
        for lo in range(0, count, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            b = idx.shape[0]
            if b not in bg_cache:
                bg_cache[b] = batch_graph(graph, b)
            bg = bg_cache[b]
            feats = static_features_batch(graph, train.syn[idx]).reshape(
                bg.n_nodes, STATIC_WIDTH)
            outputs = model.forward(bg, feats, sample=cfg.sample_in_training,
                                    train_mode=True, rng=rng)
            loss = composite_loss(outputs, mats, train.ex[idx], train.ez[idx],
                                  train.syn[idx], train.labels[idx],
                                  beta=beta, model=model)
            nn.zero_grads(params)
            loss.backward()
            nn.clip_gradients(params, cfg.clip_norm)
            nn.adamw_step(opt_state, params)
            losses.append(loss.item())

        lers = evaluate_model_ler(model, code, graph, val, cfg.val_mc_passes,
                                  val_rng)
        history.append(EpochRecord(
            epoch=epoch_offset + epoch, train_loss=float(np.mean(losses)),
            val_ler_mean=lers["mean"], val_ler_lower=lers["lower"],
            val_ler_upper=lers["upper"], lr=opt_state.lr, beta=beta,
            phase=phase, domain=domain or code.name,
        ))
        if lers["mean"] < best_ler:
            best_ler = lers["mean"]
            best_state = copy.deepcopy(model.state_arrays())
            since_best = 0
        else:
            since_best += 1
        if best_ler == 0.0 or since_best >= cfg.patience:
            break

    if cfg.restore_best and best_state is not None:
        model.load_state_arrays(best_state)
    return model, history


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def save_model(path, model: QubaModel, extra: dict | None = None) -> None:
    arch = model.arch()
    if extra:
        arch = {**arch, "extra": extra}
    nn.save_checkpoint(path, arch, model.state_arrays())


def load_model(path) -> QubaModel:
    arch, state = nn.load_checkpoint(path)
    model = QubaModel.from_arch(arch)
    model.load_state_arrays({k: v for k, v in state.items()})
    return model
