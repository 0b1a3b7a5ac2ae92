"""Layers for the decoder: variational linears, batchnorm, LSTM cell.

Variational layers keep mean parameters mu and pre-softplus scale
parameters rho (sigma = softplus(rho), always positive).  A sampled
forward draws theta = mu + sigma * eps with fresh standard-normal eps per
call; the deterministic path uses mu alone.  The KL of each layer against
an isotropic Gaussian prior is available in closed form:

    KL = 1/2 sum_j [ sigma_j^2/sp^2 + mu_j^2/sp^2 - 1 - ln(sigma_j^2/sp^2) ]

Initialisation: mu ~ N(0, 0.1^2), rho = -5 (sigma ~ 6.7e-3), so early
training is near-deterministic.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Module:
    """Lightweight parameter container with recursive discovery."""

    _buffer_names: tuple[str, ...] = ()

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name in sorted(vars(self)):
            obj = getattr(self, name)
            key = f"{prefix}{name}"
            if isinstance(obj, Tensor) and obj.requires_grad:
                out[key] = obj
            elif isinstance(obj, Module):
                out.update(obj.named_parameters(f"{key}."))
            elif isinstance(obj, (list, tuple)):
                for i, item in enumerate(obj):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{key}.{i}."))
        return out

    def named_buffers(self, prefix: str = "") -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for name in sorted(vars(self)):
            obj = getattr(self, name)
            key = f"{prefix}{name}"
            if name in self._buffer_names:
                out[key] = obj
            elif isinstance(obj, Module):
                out.update(obj.named_buffers(f"{key}."))
            elif isinstance(obj, (list, tuple)):
                for i, item in enumerate(obj):
                    if isinstance(item, Module):
                        out.update(item.named_buffers(f"{key}.{i}."))
        return out

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Parameters plus buffers as plain arrays (checkpoint granularity)."""
        state = {k: v.values for k, v in self.named_parameters().items()}
        state.update(self.named_buffers())
        return state

    def load_state_arrays(self, state: dict[str, np.ndarray]):
        params = self.named_parameters()
        buffers = self.named_buffers()
        expect = set(params) | set(buffers)
        if expect != set(state):
            missing = expect - set(state)
            extra = set(state) - expect
            raise ValueError(f"state mismatch: missing {missing}, unexpected {extra}")
        for k, p in params.items():
            if p.values.shape != np.shape(state[k]):
                raise ValueError(
                    f"{k}: shape {np.shape(state[k])} != {p.values.shape}"
                )
            p.values[...] = state[k]
        for k in buffers:
            buffers[k][...] = state[k]


def variational_sigma(rho: Tensor) -> Tensor:
    return T.softplus(rho)


class VariationalLinear(Module):
    """Linear layer with a factorized Gaussian posterior over its weights."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 dtype=np.float32, mu_std: float = 0.1, rho_init: float = -5.0):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.mu_w = T.parameter(rng.normal(0.0, mu_std, (in_dim, out_dim)), dtype)
        self.rho_w = T.parameter(np.full((in_dim, out_dim), rho_init), dtype)
        self.mu_b = T.parameter(np.zeros(out_dim), dtype)
        self.rho_b = T.parameter(np.full(out_dim, rho_init), dtype)

    def forward(self, x: Tensor, sample: bool, rng: np.random.Generator | None = None) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"expected input width {self.in_dim}, got {x.shape[-1]}")
        if sample:
            if rng is None:
                raise ValueError("sampling forward needs an rng")
            dt = self.mu_w.values.dtype
            # f64 ziggurat + cast beats the float32 sampling path
            eps_w = rng.standard_normal(self.mu_w.shape).astype(dt, copy=False)
            eps_b = rng.standard_normal(self.mu_b.shape).astype(dt, copy=False)
            w = T.add(self.mu_w, T.mul(variational_sigma(self.rho_w), eps_w))
            b = T.add(self.mu_b, T.mul(variational_sigma(self.rho_b), eps_b))
        else:
            w, b = self.mu_w, self.mu_b
        return T.linear(x, w, b)

    def kl(self, prior_var: float = 1.0) -> Tensor:
        if prior_var <= 0:
            raise ValueError(f"prior_var must be positive, got {prior_var}")
        total = None
        for mu, rho in ((self.mu_w, self.rho_w), (self.mu_b, self.rho_b)):
            var = T.square(variational_sigma(rho))
            ratio = T.mul(var, 1.0 / prior_var)
            term = T.sub(T.add(ratio, T.mul(T.square(mu), 1.0 / prior_var)),
                         T.add(T.log(ratio), 1.0))
            s = T.sum_(term)
            total = s if total is None else T.add(total, s)
        return T.mul(total, 0.5)


def bayesian_linear_forward(layer: VariationalLinear, x: Tensor, sample: bool,
                            rng: np.random.Generator | None = None) -> Tensor:
    return layer.forward(x, sample, rng)


def kl_divergence(layer: VariationalLinear, prior_var: float = 1.0) -> Tensor:
    return layer.kl(prior_var)


class Linear(Module):
    """Plain deterministic linear layer (LSTM internals)."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 dtype=np.float32, bias: bool = True):
        bound = 1.0 / np.sqrt(in_dim)
        self.w = T.parameter(rng.uniform(-bound, bound, (in_dim, out_dim)), dtype)
        self.b = T.parameter(np.zeros(out_dim), dtype) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return T.linear(x, self.w, self.b)


class BatchNorm1d(Module):
    """Batch normalization over rows; torch-style running statistics."""

    _buffer_names = ("running_mean", "running_var")

    def __init__(self, dim: int, momentum: float = 0.1, eps: float = 1e-5,
                 dtype=np.float32):
        self.dim = dim
        self.momentum = momentum
        self.eps = eps
        self.gamma = T.parameter(np.ones(dim), dtype)
        self.beta = T.parameter(np.zeros(dim), dtype)
        self.running_mean = np.zeros(dim, dtype=dtype)
        self.running_var = np.ones(dim, dtype=dtype)

    def forward(self, x: Tensor, training: bool) -> Tensor:
        if training:
            mu = T.mean_(x, axis=0, keepdims=True)
            xc = T.sub(x, mu)
            var = T.mean_(T.square(xc), axis=0, keepdims=True)
            inv = T.reciprocal(T.sqrt(T.add(var, self.eps)))
            y = T.add(T.mul(T.mul(xc, inv), self.gamma), self.beta)
            n = x.shape[0]
            unbiased = var.values.reshape(-1) * (n / max(n - 1, 1))
            m = self.momentum
            self.running_mean[...] = (1 - m) * self.running_mean + m * mu.values.reshape(-1)
            self.running_var[...] = (1 - m) * self.running_var + m * unbiased
            return y
        inv = 1.0 / np.sqrt(self.running_var + self.eps)
        scale = (inv).astype(x.values.dtype)
        return T.add(T.mul(T.sub(x, self.running_mean), T.mul(self.gamma, scale)),
                     self.beta)


class LSTMCell(Module):
    """Single LSTM cell; gate order (input, forget, candidate, output)."""

    def __init__(self, in_dim: int, hidden: int, rng: np.random.Generator,
                 dtype=np.float32):
        self.hidden = hidden
        # one shared bias is enough; hh carries it
        self.ih = Linear(in_dim, 4 * hidden, rng, dtype, bias=False)
        self.hh = Linear(hidden, 4 * hidden, rng, dtype)

    def forward(self, z: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        return lstm_cell(z, h, c, self)


def lstm_cell(z: Tensor, h: Tensor, c: Tensor, params: LSTMCell) -> tuple[Tensor, Tensor]:
    """Standard LSTM gate equations: returns (h', c')."""
    hid = params.hidden
    gates = T.add(params.ih.forward(z), params.hh.forward(h))
    i = T.sigmoid(T.slice_cols(gates, 0, hid))
    f = T.sigmoid(T.slice_cols(gates, hid, 2 * hid))
    g = T.tanh(T.slice_cols(gates, 2 * hid, 3 * hid))
    o = T.sigmoid(T.slice_cols(gates, 3 * hid, 4 * hid))
    c_new = T.add(T.mul(f, c), T.mul(i, g))
    h_new = T.mul(o, T.tanh(c_new))
    return h_new, c_new


class Dropout(Module):
    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x: Tensor, active: bool, rng: np.random.Generator | None = None) -> Tensor:
        if not active or self.rate == 0.0:
            return x
        if rng is None:
            raise ValueError("active dropout needs an rng")
        return T.dropout(x, self.rate, rng, active=True)
