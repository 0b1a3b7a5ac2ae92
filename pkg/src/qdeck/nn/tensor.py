"""Minimal dense-tensor reverse-mode autodiff on numpy arrays.

Design points:
  * a Tensor wraps a numpy array plus optional graph linkage; the backward
    pass visits each node exactly once in reverse topological order and
    frees interior gradients as soon as they have been propagated;
  * everything trains in float32; gradient checks build float64 graphs
    (dtype follows the leaves, python scalars never promote);
  * graph construction can be switched off with no_grad() for inference,
    so Monte Carlo sampling holds only the current iteration in memory;
  * grouped edge ops (scatter softmax, segment sums) are first-class
    primitives with fused backwards rather than compositions, since they
    sit in the hot loop of message passing.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph construction inside the context (inference mode)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, values, requires_grad=False, parents=(), backward_fn=None):
        self.values = np.asarray(values)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward_fn = backward_fn

    # -- construction helpers ------------------------------------------------
    @property
    def shape(self):
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    @property
    def is_leaf(self):
        return not self._parents

    def item(self) -> float:
        return float(self.values)

    def detach(self) -> "Tensor":
        return Tensor(self.values)

    def zero_grad(self):
        self.grad = None

    # -- autodiff -------------------------------------------------------------
    def backward(self, seed=None):
        if seed is None:
            if self.values.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            seed = np.ones_like(self.values)
        order = _toposort(self)
        self.grad = np.asarray(seed, dtype=self.values.dtype)
        for node in reversed(order):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)
            if node._parents:
                node.grad = None  # interior grads are consumed exactly once

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        flag = "grad" if self.requires_grad else "const"
        return f"Tensor{self.shape}[{self.dtype}, {flag}]"


def tensor(values, dtype=None) -> Tensor:
    return Tensor(np.asarray(values, dtype=dtype))


def parameter(values, dtype=np.float32) -> Tensor:
    return Tensor(np.array(values, dtype=dtype), requires_grad=True)


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.values.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _node(values, parents, backward_fn) -> Tensor:
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(values, requires_grad=True, parents=tuple(parents),
                      backward_fn=backward_fn)
    return Tensor(values)


def _accum(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.values.dtype)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- arithmetic ----------------------------------------------------------


def add(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    out = a.values + b.values

    def backward(g):
        _accum(a, _unbroadcast(g, a.values.shape))
        _accum(b, _unbroadcast(g, b.values.shape))

    return _node(out, (a, b), backward)


def sub(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    out = a.values - b.values

    def backward(g):
        _accum(a, _unbroadcast(g, a.values.shape))
        _accum(b, _unbroadcast(-g, b.values.shape))

    return _node(out, (a, b), backward)


def mul(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    out = a.values * b.values

    def backward(g):
        _accum(a, _unbroadcast(g * b.values, a.values.shape))
        _accum(b, _unbroadcast(g * a.values, b.values.shape))

    return _node(out, (a, b), backward)


def neg(a) -> Tensor:
    a = _as_tensor(a)

    def backward(g):
        _accum(a, -g)

    return _node(-a.values, (a,), backward)


def reciprocal(a) -> Tensor:
    a = _as_tensor(a)
    out = 1.0 / a.values

    def backward(g):
        _accum(a, -g * out * out)

    return _node(out, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.values.ndim != 2 or b.values.ndim != 2:
        raise ValueError(f"matmul needs 2-D operands, got {a.shape} @ {b.shape}")
    out = a.values @ b.values

    def backward(g):
        if a.requires_grad:
            _accum(a, g @ b.values.T)
        if b.requires_grad:
            _accum(b, a.values.T @ g)

    return _node(out, (a, b), backward)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Fused x @ w + b (2-D x, one node instead of a matmul/add pair)."""
    x, w = _as_tensor(x), _as_tensor(w)
    out = x.values @ w.values
    if b is not None:
        b = _as_tensor(b, x)
        out += b.values

    def backward(g):
        if x.requires_grad:
            _accum(x, g @ w.values.T)
        if w.requires_grad:
            _accum(w, x.values.T @ g)
        if b is not None and b.requires_grad:
            _accum(b, g.sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return _node(out, parents, backward)


def square(a) -> Tensor:
    a = _as_tensor(a)

    def backward(g):
        _accum(a, g * 2.0 * a.values)

    return _node(a.values * a.values, (a,), backward)


def sqrt(a) -> Tensor:
    a = _as_tensor(a)
    out = np.sqrt(a.values)

    def backward(g):
        _accum(a, g * 0.5 / out)

    return _node(out, (a,), backward)


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out = np.exp(a.values)

    def backward(g):
        _accum(a, g * out)

    return _node(out, (a,), backward)


def log(a) -> Tensor:
    a = _as_tensor(a)

    def backward(g):
        _accum(a, g / a.values)

    return _node(np.log(a.values), (a,), backward)


# -- shape ops ------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    a = _as_tensor(a)
    old = a.values.shape

    def backward(g):
        _accum(a, g.reshape(old))

    return _node(a.values.reshape(shape), (a,), backward)


def concat(parts, axis=1) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    sizes = [p.values.shape[axis] for p in parts]
    out = np.concatenate([p.values for p in parts], axis=axis)
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(p, g[tuple(idx)])

    return _node(out, tuple(parts), backward)


def slice_cols(a: Tensor, lo: int, hi: int) -> Tensor:
    a = _as_tensor(a)

    def backward(g):
        if a.requires_grad:
            ga = np.zeros_like(a.values)
            ga[:, lo:hi] = g
            _accum(a, ga)

    return _node(a.values[:, lo:hi], (a,), backward)


# -- reductions -------------------------------------------------------------


def sum_(a, axis=None, keepdims=False) -> Tensor:
    a = _as_tensor(a)
    out = a.values.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.values.shape).copy())

    return _node(out, (a,), backward)


def mean_(a, axis=None, keepdims=False) -> Tensor:
    a = _as_tensor(a)
    out = a.values.mean(axis=axis, keepdims=keepdims)
    denom = a.values.size / max(out.size, 1)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g / denom, a.values.shape).astype(a.values.dtype))

    return _node(out, (a,), backward)


# -- nonlinearities ----------------------------------------------------------


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    out = 1.0 / (1.0 + np.exp(-a.values))

    def backward(g):
        _accum(a, g * out * (1.0 - out))

    return _node(out, (a,), backward)


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.values)

    def backward(g):
        _accum(a, g * (1.0 - out * out))

    return _node(out, (a,), backward)


def leaky_relu(a, slope: float = 0.01, inplace: bool = False) -> Tensor:
    """LeakyReLU.  inplace=True reuses the input buffer; only safe when no
    other backward needs the pre-activation values (e.g. straight after a
    linear layer).  The per-element slope array is kept for the backward
    (multiplies beat np.where by an order of magnitude here)."""
    a = _as_tensor(a)
    dt = a.values.dtype
    scale = (a.values < 0) * dt.type(slope - 1.0)
    scale += dt.type(1.0)
    if inplace:
        out = a.values
        out *= scale
    else:
        out = a.values * scale

    def backward(g):
        _accum(a, g * scale)

    return _node(out, (a,), backward)


def softplus(a) -> Tensor:
    a = _as_tensor(a)
    out = np.logaddexp(0.0, a.values).astype(a.values.dtype)

    def backward(g):
        _accum(a, g / (1.0 + np.exp(-a.values)))

    return _node(out, (a,), backward)


def parity_surrogate(a) -> Tensor:
    """Smooth parity |sin(pi x / 2)|; subgradient 0 at even integers.

    The even-integer mask uses the exact input values (floating sin at
    those points is nonzero noise, so sign(sin) alone cannot define the
    subgradient there)."""
    a = _as_tensor(a)
    s = np.sin(0.5 * np.pi * a.values)
    out = np.abs(s)

    def backward(g):
        d = 0.5 * np.pi * np.cos(0.5 * np.pi * a.values) * np.sign(s)
        d[np.mod(a.values, 2.0) == 0.0] = 0.0
        _accum(a, (g * d).astype(a.values.dtype))

    return _node(out, (a,), backward)


def log_softmax(a: Tensor) -> Tensor:
    """Row-wise log softmax over the last axis (numerically stable)."""
    a = _as_tensor(a)
    shifted = a.values - a.values.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - lse

    def backward(g):
        sm = np.exp(out)
        _accum(a, g - sm * g.sum(axis=-1, keepdims=True))

    return _node(out, (a,), backward)


def pick(a: Tensor, col_idx: np.ndarray) -> Tensor:
    """Select a[i, col_idx[i]] for every row i."""
    a = _as_tensor(a)
    rows = np.arange(a.values.shape[0])
    col_idx = np.asarray(col_idx)

    def backward(g):
        if a.requires_grad:
            ga = np.zeros_like(a.values)
            np.add.at(ga, (rows, col_idx), g)
            _accum(a, ga)

    return _node(a.values[rows, col_idx], (a,), backward)


# -- row gather / segment ops -----------------------------------------------


def gather_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """Row gather y[e] = a[idx[e]]; backward is a sorted scatter-add."""
    a = _as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    need = a.requires_grad and _GRAD_ENABLED
    if need:
        perm = np.argsort(idx, kind="stable")
        sorted_idx = idx[perm]
        starts = np.nonzero(
            np.concatenate([[True], sorted_idx[1:] != sorted_idx[:-1]])
        )[0]
        uniq = sorted_idx[starts]

    def backward(g):
        gsrc = np.zeros_like(a.values)
        gsrc[uniq] = np.add.reduceat(g[perm], starts, axis=0)
        _accum(a, gsrc)

    return _node(a.values[idx], (a,), backward)


def segment_sum(a: Tensor, seg_ids: np.ndarray, n_out: int) -> Tensor:
    """Sum rows of `a` into n_out buckets: y[s] = sum over rows with id s.

    seg_ids must be sorted ascending (contiguous groups); buckets that
    receive no rows stay zero.
    """
    a = _as_tensor(a)
    seg_ids = np.asarray(seg_ids, dtype=np.int64)
    out = np.zeros((n_out,) + a.values.shape[1:], dtype=a.values.dtype)
    if seg_ids.size:
        starts = np.nonzero(np.concatenate([[True], seg_ids[1:] != seg_ids[:-1]]))[0]
        uniq = seg_ids[starts]
        out[uniq] = np.add.reduceat(a.values, starts, axis=0)

    def backward(g):
        _accum(a, g[seg_ids])

    return _node(out, (a,), backward)


def scatter_softmax(scores: Tensor, dst: np.ndarray) -> Tensor:
    """Softmax over groups sharing a destination index (max-shifted).

    Works on (E,) or (E, H) scores; each destination's group normalizes
    independently and sums to one.
    """
    scores = _as_tensor(scores)
    dst = np.asarray(dst, dtype=np.int64)
    if dst.shape[0] != scores.values.shape[0]:
        raise ValueError("dst length must match the leading axis of scores")
    if np.any(dst[1:] < dst[:-1]):
        perm = np.argsort(dst, kind="stable")
        inv = np.argsort(perm, kind="stable")
        sorted_alpha = scatter_softmax(_gather_plain(scores, perm), dst[perm])
        return _gather_plain(sorted_alpha, inv)

    starts = np.nonzero(np.concatenate([[True], dst[1:] != dst[:-1]]))[0]
    counts = np.diff(np.concatenate([starts, [dst.shape[0]]]))

    def per_group(vals, reducer):
        red = reducer(vals, starts, axis=0)
        return np.repeat(red, counts, axis=0)

    mx = per_group(scores.values, np.maximum.reduceat)
    e = np.exp(scores.values - mx)
    denom = per_group(e, np.add.reduceat)
    alpha = e / denom

    def backward(g):
        t = alpha * g
        tot = per_group(t, np.add.reduceat)
        _accum(scores, (t - alpha * tot).astype(scores.values.dtype))

    return _node(alpha, (scores,), backward)


def _gather_plain(a: Tensor, idx: np.ndarray) -> Tensor:
    """Permutation gather (idx is a bijection, backward is the inverse)."""
    a = _as_tensor(a)
    inv = np.argsort(idx, kind="stable")

    def backward(g):
        _accum(a, g[inv])

    return _node(a.values[idx], (a,), backward)


def dropout(a: Tensor, rate: float, rng: np.random.Generator, active: bool,
            inplace: bool = False) -> Tensor:
    """Inverted dropout with a fresh mask per call while active.

    The mask is kept as booleans; inplace=True reuses the input buffer
    (same safety caveat as leaky_relu).
    """
    if not active or rate <= 0.0:
        return a
    a = _as_tensor(a)
    dt = a.values.dtype
    factor = (rng.random(a.values.shape, dtype=np.float32) >= rate) \
        * dt.type(1.0 / (1.0 - rate))
    if inplace:
        out = a.values
        out *= factor
    else:
        out = a.values * factor

    def backward(g):
        _accum(a, g * factor)

    return _node(out, (a,), backward)


# -- verification -------------------------------------------------------------


def zero_grads(params) -> None:
    for p in (params.values() if isinstance(params, dict) else params):
        p.zero_grad()


def finite_diff_check(fn, point, h: float = 1e-4) -> float:
    """Max relative error between reverse-mode and central differences.

    `fn` maps the point (one Tensor or a list of Tensors, float64
    recommended) to a scalar Tensor.  The analytic gradient from one
    backward pass is compared against (f(x+h) - f(x-h)) / 2h; deviations
    are normalized per tensor by the dominant gradient magnitude, so
    coordinates whose true gradient sits below the finite-difference
    noise floor do not register as spurious failures.
    """
    points = [point] if isinstance(point, Tensor) else list(point)
    for p in points:
        p.zero_grad()
    out = fn(point)
    out.backward()
    analytic = [
        np.zeros_like(p.values) if p.grad is None else p.grad.copy() for p in points
    ]

    worst = 0.0
    for p, ga in zip(points, analytic):
        numeric = np.zeros_like(ga)
        for idx in np.ndindex(p.values.shape):
            orig = p.values[idx]
            with no_grad():
                p.values[idx] = orig + h
                f_plus = fn(point).item()
                p.values[idx] = orig - h
                f_minus = fn(point).item()
            p.values[idx] = orig
            numeric[idx] = (f_plus - f_minus) / (2.0 * h)
        scale = max(np.abs(ga).max(initial=0.0), np.abs(numeric).max(initial=0.0),
                    1e-10)
        worst = max(worst, float(np.abs(ga - numeric).max(initial=0.0)) / scale)
    return worst
