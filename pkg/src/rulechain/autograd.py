"""Minimal reverse-mode autodiff over numpy arrays.

Nodes are recorded on an explicit tape while a ``recording()`` block is
active; outside one, the same ops run as plain numpy with no graph. Only
what the models need is implemented: affine maps, elementwise arithmetic,
sigmoid/tanh/exp/log, concat, row/element indexing, weighted sums, softmax,
and clamping. All values are float64.

Not thread-safe across concurrent recordings (one module-level tape);
evaluation without recording is pure and reentrant.
"""

from __future__ import annotations

import numpy as np

_TAPE: list | None = None


class recording:
    """Context manager that activates a fresh tape and yields it."""

    def __enter__(self):
        global _TAPE
        if _TAPE is not None:
            raise RuntimeError("nested recordings are not supported")
        _TAPE = []
        return _TAPE

    def __exit__(self, *exc):
        global _TAPE
        _TAPE = None
        return False


class Var:
    """A value plus (optionally) its place in the recorded graph."""

    __slots__ = ("value", "grad", "needs_grad", "_back")

    def __init__(self, value, needs_grad: bool = False):
        if type(value) is not np.ndarray or value.dtype != np.float64:
            value = np.asarray(value, dtype=np.float64)
        self.value = value
        self.grad = None
        self.needs_grad = needs_grad
        self._back = None

    def zero_grad(self):
        self.grad = None

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g


def param(value) -> Var:
    """A leaf that collects gradients."""
    return Var(value, needs_grad=True)


def _wrap(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _node(value, back, *parents) -> Var:
    needs = any(p.needs_grad for p in parents)
    out = Var(value, needs_grad=needs)
    if needs and _TAPE is not None:
        out._back = back
        _TAPE.append(out)
    return out


def backward(loss: Var, tape: list) -> None:
    """Run the reverse pass, accumulating into every reachable leaf's .grad."""
    if loss.grad is None:
        loss.grad = np.ones_like(loss.value)
    for node in reversed(tape):
        if node._back is not None and node.grad is not None:
            node._back(node.grad)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to `shape`."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------- arithmetic


def add(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    out_val = a.value + b.value

    def back(g):
        if a.needs_grad:
            a.accumulate(g if g.shape == a.value.shape else _unbroadcast(g, a.value.shape))
        if b.needs_grad:
            b.accumulate(g if g.shape == b.value.shape else _unbroadcast(g, b.value.shape))

    return _node(out_val, back, a, b)


def sub(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    out_val = a.value - b.value

    def back(g):
        if a.needs_grad:
            a.accumulate(g if g.shape == a.value.shape else _unbroadcast(g, a.value.shape))
        if b.needs_grad:
            b.accumulate(-g if g.shape == b.value.shape else -_unbroadcast(g, b.value.shape))

    return _node(out_val, back, a, b)


def mul(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    out_val = a.value * b.value

    def back(g):
        if a.needs_grad:
            ga = g * b.value
            a.accumulate(ga if ga.shape == a.value.shape else _unbroadcast(ga, a.value.shape))
        if b.needs_grad:
            gb = g * a.value
            b.accumulate(gb if gb.shape == b.value.shape else _unbroadcast(gb, b.value.shape))

    return _node(out_val, back, a, b)


def rsub_const(c: float, a) -> Var:
    """c - a for a plain float c."""
    a = _wrap(a)

    def back(g):
        if a.needs_grad:
            a.accumulate(-g)

    return _node(c - a.value, back, a)


def scale(a, c: float) -> Var:
    a = _wrap(a)

    def back(g):
        if a.needs_grad:
            a.accumulate(g * c)

    return _node(a.value * c, back, a)


# ------------------------------------------------------------- dense algebra


def affine(x, W, b=None) -> Var:
    """x @ W.T (+ b). x: (in,) or (n, in); W: (out, in); b: (out,)."""
    x, W = _wrap(x), _wrap(W)
    out_val = x.value @ W.value.T
    if b is not None:
        b = _wrap(b)
        out_val = out_val + b.value

    def back(g):
        if W.needs_grad:
            if g.ndim == 1:
                W.accumulate(np.outer(g, x.value))
            else:
                W.accumulate(g.T @ x.value)
        if b is not None and b.needs_grad:
            b.accumulate(g if g.ndim == 1 else g.sum(axis=0))
        if x.needs_grad:
            x.accumulate(g @ W.value)

    parents = (x, W) if b is None else (x, W, b)
    return _node(out_val, back, *parents)


def lincomb2(x, W, h, U, b) -> Var:
    """x @ W.T + h @ U.T + b, the GRU gate pre-activation, as one node."""
    x, W, h, U, b = _wrap(x), _wrap(W), _wrap(h), _wrap(U), _wrap(b)
    out_val = x.value @ W.value.T + h.value @ U.value.T + b.value

    def back(g):
        batched = g.ndim > 1
        if W.needs_grad:
            W.accumulate(g.T @ x.value if batched else g[:, None] * x.value[None, :])
        if U.needs_grad:
            U.accumulate(g.T @ h.value if batched else g[:, None] * h.value[None, :])
        if b.needs_grad:
            b.accumulate(g.sum(axis=0) if batched else g)
        if x.needs_grad:
            x.accumulate(g @ W.value)
        if h.needs_grad:
            h.accumulate(g @ U.value)

    return _node(out_val, back, x, W, h, U, b)


def dot(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)

    def back(g):
        if a.needs_grad:
            a.accumulate(g * b.value)
        if b.needs_grad:
            b.accumulate(g * a.value)

    return _node(a.value @ b.value, back, a, b)


def weighted_rows(alpha, H) -> Var:
    """alpha @ H: combine the rows of H (R, d) with weights alpha (R,)."""
    alpha, H = _wrap(alpha), _wrap(H)

    def back(g):
        if alpha.needs_grad:
            alpha.accumulate(H.value @ g)
        if H.needs_grad:
            H.accumulate(np.outer(alpha.value, g))

    return _node(alpha.value @ H.value, back, alpha, H)


def matvec(M, v) -> Var:
    """M @ v: (n, k) @ (k,) -> (n,)."""
    M, v = _wrap(M), _wrap(v)

    def back(g):
        if M.needs_grad:
            M.accumulate(np.outer(g, v.value))
        if v.needs_grad:
            v.accumulate(g @ M.value)

    return _node(M.value @ v.value, back, M, v)


def slice_rows(M, lo: int, hi: int) -> Var:
    M = _wrap(M)

    def back(g):
        if M.needs_grad:
            gm = np.zeros_like(M.value)
            gm[lo:hi] = g
            M.accumulate(gm)

    return _node(M.value[lo:hi], back, M)


def broadcast_rows(v, n: int) -> Var:
    """Tile a vector (d,) into (n, d)."""
    v = _wrap(v)

    def back(g):
        if v.needs_grad:
            v.accumulate(g.sum(axis=0))

    return _node(np.broadcast_to(v.value, (n, v.value.shape[0])).copy(), back, v)


def concat(parts, axis: int = -1) -> Var:
    parts = [_wrap(p) for p in parts]
    sizes = [p.value.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def back(g):
        moved = np.moveaxis(g, axis, -1)
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.needs_grad:
                p.accumulate(np.moveaxis(moved[..., lo:hi], -1, axis))

    return _node(np.concatenate([p.value for p in parts], axis=axis), back, *parts)


def row(M, i: int) -> Var:
    M = _wrap(M)

    def back(g):
        if M.needs_grad:
            gm = np.zeros_like(M.value)
            gm[i] = g
            M.accumulate(gm)

    return _node(M.value[i], back, M)


def element(v, i: int) -> Var:
    v = _wrap(v)

    def back(g):
        if v.needs_grad:
            gv = np.zeros_like(v.value)
            gv[i] = g
            v.accumulate(gv)

    return _node(v.value[i], back, v)


# ----------------------------------------------------------- nonlinearities


def sigmoid(a) -> Var:
    a = _wrap(a)
    with np.errstate(over="ignore"):
        y = 1.0 / (1.0 + np.exp(-a.value))

    def back(g):
        if a.needs_grad:
            a.accumulate(g * y * (1.0 - y))

    return _node(y, back, a)


def tanh(a) -> Var:
    a = _wrap(a)
    y = np.tanh(a.value)

    def back(g):
        if a.needs_grad:
            a.accumulate(g * (1.0 - y * y))

    return _node(y, back, a)


def log(a) -> Var:
    a = _wrap(a)

    def back(g):
        if a.needs_grad:
            a.accumulate(g / a.value)

    return _node(np.log(a.value), back, a)


def clamp(a, lo: float, hi: float) -> Var:
    """Clip values; gradient passes through only where unclipped."""
    a = _wrap(a)
    mask = (a.value >= lo) & (a.value <= hi)

    def back(g):
        if a.needs_grad:
            a.accumulate(g * mask)

    return _node(np.clip(a.value, lo, hi), back, a)


def softmax(a) -> Var:
    """Stabilized softmax over a 1-d score vector."""
    a = _wrap(a)
    shifted = a.value - a.value.max()
    e = np.exp(shifted)
    y = e / e.sum()

    def back(g):
        if a.needs_grad:
            a.accumulate(y * (g - g @ y))

    return _node(y, back, a)


def where_const(mask, a, b) -> Var:
    """Select rows/elements by a constant boolean mask: mask ? a : b."""
    a, b = _wrap(a), _wrap(b)
    m = np.asarray(mask)
    while m.ndim < a.value.ndim:
        m = m[..., None]

    def back(g):
        if a.needs_grad:
            a.accumulate(_unbroadcast(g * m, a.value.shape))
        if b.needs_grad:
            b.accumulate(_unbroadcast(g * (1.0 - m), b.value.shape))

    return _node(np.where(m, a.value, b.value), back, a, b)
