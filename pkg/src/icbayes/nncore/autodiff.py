"""Reverse-mode scalar-loss autodiff on numpy arrays.

A `Var` wraps an ndarray and remembers how it was made; `backward` walks the
tape once in reverse topological order and accumulates gradients into every
node that wants them.  Only the operations the velocity-field network and its
training objectives need are implemented; everything stays in whatever float
dtype the inputs carry (float64 end to end by default).
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf as _np_erf

__all__ = [
    "Var",
    "constant",
    "parameter",
    "backward",
    "matmul",
    "vsum",
    "vmean",
    "exp",
    "log",
    "sqrt",
    "erf",
    "tanh",
    "power",
    "reshape",
    "swapaxes",
    "concat",
    "softmax",
    "layer_norm",
    "gelu",
    "assemble_tril",
    "solve_tri",
]


class Var:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, parents=(), backward=None, requires_grad=True):
        self.value = value if isinstance(value, np.ndarray) else np.asarray(value, dtype=float)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    # -- introspection ---------------------------------------------------

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def dtype(self):
        return self.value.dtype

    def item(self):
        return float(self.value)

    def __repr__(self):
        return f"Var(shape={self.value.shape}, dtype={self.value.dtype})"

    # -- operators ---------------------------------------------------------

    def __add__(self, other):
        return _add(self, _as_var(other))

    def __radd__(self, other):
        return _add(_as_var(other), self)

    def __sub__(self, other):
        return _sub(self, _as_var(other))

    def __rsub__(self, other):
        return _sub(_as_var(other), self)

    def __mul__(self, other):
        return _mul(self, _as_var(other))

    def __rmul__(self, other):
        return _mul(_as_var(other), self)

    def __truediv__(self, other):
        return _div(self, _as_var(other))

    def __rtruediv__(self, other):
        return _div(_as_var(other), self)

    def __neg__(self):
        return _mul(self, constant(np.asarray(-1.0, dtype=self.value.dtype)))

    def __matmul__(self, other):
        return matmul(self, _as_var(other))

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, key):
        return _getitem(self, key)


def constant(value) -> Var:
    """Leaf that never wants a gradient (data, masks, baked-in scalars)."""
    return Var(value, requires_grad=False)


def parameter(value) -> Var:
    return Var(value, requires_grad=True)


def _as_var(x) -> Var:
    return x if isinstance(x, Var) else constant(np.asarray(x, dtype=float))


def _wants_grad(v: Var) -> bool:
    return v.requires_grad or bool(v._parents)


def _accum(v: Var, g: np.ndarray) -> None:
    if not _wants_grad(v):
        return
    v.grad = g if v.grad is None else v.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def backward(loss: Var) -> None:
    """Populate ``grad`` on every reachable node that wants one."""
    if loss.value.ndim != 0:
        raise ValueError("backward expects a scalar loss")
    topo: list = []
    seen: set = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    loss.grad = np.ones_like(loss.value)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# arithmetic


def _add(a: Var, b: Var) -> Var:
    out_val = a.value + b.value

    def bwd(g):
        _accum(a, _unbroadcast(g, a.value.shape))
        _accum(b, _unbroadcast(g, b.value.shape))

    return Var(out_val, (a, b), bwd)


def _sub(a: Var, b: Var) -> Var:
    out_val = a.value - b.value

    def bwd(g):
        _accum(a, _unbroadcast(g, a.value.shape))
        _accum(b, _unbroadcast(-g, b.value.shape))

    return Var(out_val, (a, b), bwd)


def _mul(a: Var, b: Var) -> Var:
    out_val = a.value * b.value

    def bwd(g):
        _accum(a, _unbroadcast(g * b.value, a.value.shape))
        _accum(b, _unbroadcast(g * a.value, b.value.shape))

    return Var(out_val, (a, b), bwd)


def _div(a: Var, b: Var) -> Var:
    out_val = a.value / b.value

    def bwd(g):
        _accum(a, _unbroadcast(g / b.value, a.value.shape))
        _accum(b, _unbroadcast(-g * a.value / (b.value * b.value), b.value.shape))

    return Var(out_val, (a, b), bwd)


def matmul(a: Var, b: Var) -> Var:
    """Matrix product with numpy's batched-matmul broadcasting."""
    out_val = a.value @ b.value

    def bwd(g):
        ga = g @ np.swapaxes(b.value, -1, -2)
        gb = np.swapaxes(a.value, -1, -2) @ g
        _accum(a, _unbroadcast(ga, a.value.shape))
        _accum(b, _unbroadcast(gb, b.value.shape))

    return Var(out_val, (a, b), bwd)


def power(a: Var, p: float) -> Var:
    p = float(p)
    out_val = a.value**p

    def bwd(g):
        _accum(a, g * p * a.value ** (p - 1.0))

    return Var(out_val, (a,), bwd)


# ---------------------------------------------------------------------------
# elementwise transcendentals


def exp(a: Var) -> Var:
    out_val = np.exp(a.value)

    def bwd(g):
        _accum(a, g * out_val)

    return Var(out_val, (a,), bwd)


def log(a: Var) -> Var:
    out_val = np.log(a.value)

    def bwd(g):
        _accum(a, g / a.value)

    return Var(out_val, (a,), bwd)


def sqrt(a: Var) -> Var:
    out_val = np.sqrt(a.value)

    def bwd(g):
        _accum(a, g * 0.5 / out_val)

    return Var(out_val, (a,), bwd)


def erf(a: Var) -> Var:
    out_val = _np_erf(a.value)
    coef = 2.0 / np.sqrt(np.pi)

    def bwd(g):
        _accum(a, g * coef * np.exp(-a.value * a.value))

    return Var(out_val, (a,), bwd)


def tanh(a: Var) -> Var:
    out_val = np.tanh(a.value)

    def bwd(g):
        _accum(a, g * (1.0 - out_val * out_val))

    return Var(out_val, (a,), bwd)


# ---------------------------------------------------------------------------
# reductions and shape ops


def vsum(a: Var, axis=None, keepdims=False) -> Var:
    out_val = a.value.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.value.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.value.shape).copy())

    return Var(out_val, (a,), bwd)


def vmean(a: Var, axis=None, keepdims=False) -> Var:
    if axis is None:
        count = a.value.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.value.shape[ax] for ax in axes]))
    return vsum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def reshape(a: Var, shape) -> Var:
    out_val = a.value.reshape(shape)

    def bwd(g):
        _accum(a, g.reshape(a.value.shape))

    return Var(out_val, (a,), bwd)


def swapaxes(a: Var, ax1: int, ax2: int) -> Var:
    out_val = np.swapaxes(a.value, ax1, ax2)

    def bwd(g):
        _accum(a, np.swapaxes(g, ax1, ax2))

    return Var(out_val, (a,), bwd)


def _getitem(a: Var, key) -> Var:
    out_val = a.value[key]

    def bwd(g):
        full = np.zeros_like(a.value)
        np.add.at(full, key, g)
        _accum(a, full)

    return Var(out_val, (a,), bwd)


def concat(parts, axis: int = -1) -> Var:
    parts = [_as_var(p) for p in parts]
    out_val = np.concatenate([p.value for p in parts], axis=axis)
    sizes = [p.value.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        for part, piece in zip(parts, np.split(g, splits, axis=axis)):
            _accum(part, piece)

    return Var(out_val, tuple(parts), bwd)


# ---------------------------------------------------------------------------
# composites


def softmax(a: Var, axis: int = -1) -> Var:
    # the max shift is treated as a constant: its gradient contribution
    # cancels exactly, so cutting it keeps the tape smaller
    shift = constant(a.value.max(axis=axis, keepdims=True))
    e = exp(a - shift)
    return e / vsum(e, axis=axis, keepdims=True)


def layer_norm(a: Var, eps: float = 1e-5) -> Var:
    """Normalize the last axis to zero mean, unit variance (no affine)."""
    m = vmean(a, axis=-1, keepdims=True)
    c = a - m
    v = vmean(c * c, axis=-1, keepdims=True)
    return c / sqrt(v + eps)


def gelu(a: Var) -> Var:
    """Exact Gaussian error linear unit: x Phi(x)."""
    return a * 0.5 * (erf(a * (1.0 / np.sqrt(2.0))) + 1.0)


# ---------------------------------------------------------------------------
# structured ops for the Gaussian-head objective


def assemble_tril(log_diag: Var, lower: Var, d: int, tril_pairs) -> Var:
    """Build batched lower-triangular matrices L from packed entries.

    ``log_diag`` is (B, d) and becomes exp() on the diagonal; ``lower`` is
    (B, n_strict) and fills the strict lower triangle in the order given by
    ``tril_pairs`` (row, col) with row > col.
    """
    batch = log_diag.value.shape[0]
    diag_val = np.exp(log_diag.value)
    out_val = np.zeros((batch, d, d), dtype=log_diag.value.dtype)
    idx = np.arange(d)
    out_val[:, idx, idx] = diag_val
    rows = np.array([j for j, _ in tril_pairs], dtype=int)
    cols = np.array([k for _, k in tril_pairs], dtype=int)
    if rows.size:
        out_val[:, rows, cols] = lower.value

    def bwd(g):
        _accum(log_diag, g[:, idx, idx] * diag_val)
        if rows.size:
            _accum(lower, g[:, rows, cols])

    return Var(out_val, (log_diag, lower), bwd)


def solve_tri(L: Var, r: Var) -> Var:
    """Batched solve L x = r for lower-triangular L: L is (B, d, d), r (B, d)."""
    x_val = np.linalg.solve(L.value, r.value[..., None])[..., 0]

    def bwd(g):
        lt = np.swapaxes(L.value, -1, -2)
        gr = np.linalg.solve(lt, g[..., None])[..., 0]
        _accum(r, gr)
        _accum(L, -gr[..., :, None] * x_val[..., None, :])

    return Var(x_val, (L, r), bwd)
