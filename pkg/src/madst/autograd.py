"""Dense float64 tensors with reverse-mode automatic differentiation.

Every op builds its output with :func:`_result`, attaching a closure that maps
the output gradient to one gradient per parent.  ``Tensor.backward`` walks the
recorded graph in reverse topological order, visiting each node once.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

DTYPE = np.float64
# surrogate for -inf in masked softmax; exp() of it underflows to exactly 0
MASK_FILL = -1e30

_grad_enabled = True


class ShapeError(ValueError):
    pass


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, op: str = ""):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None
        self.op = op

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op or 'leaf'}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() without a seed gradient needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        grads = {id(self): np.asarray(grad, dtype=DTYPE)}
        for node in reversed(_toposort(self)):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.grad is None:
                    node.grad = g.copy()
                else:
                    node.grad += g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def swapaxes(self, a: int, b: int):
        return swapaxes(self, a, b)

    @property
    def T(self):
        return swapaxes(self, -1, -2)


def _toposort(root: Tensor) -> list:
    order, seen = [], set()
    stack = [(root, False)]
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
            if id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    needs = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs, op=op)
    if needs:
        out._parents = tuple(parents)
        out._backward = backward
    return out


def unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(a.data + b.data, (a, b),
                   lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(a.data - b.data, (a, b),
                   lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(a.data * b.data, (a, b),
                   lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)), "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return (unbroadcast(g / b.data, a.shape),
                unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _result(a.data / b.data, (a, b), backward, "div")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _result(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _result(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # exp of a non-positive argument only, so no overflow warnings
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)
    return _result(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return _result(y, (x,), lambda g: (g * y,), "exp")


def log(x: Tensor, eps: float = 0.0) -> Tensor:
    """Natural log of ``max(x, eps)``; clamped entries get zero gradient."""
    safe = np.maximum(x.data, eps) if eps > 0 else x.data
    live = x.data >= eps if eps > 0 else np.ones_like(x.data, dtype=bool)
    return _result(np.log(safe), (x,), lambda g: (np.where(live, g / safe, 0.0),), "log")


# ---------------------------------------------------------------- reductions / shape

def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result(x.data.sum(axis=axis, keepdims=keepdims), (x,), backward, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return sum_(x, axis, keepdims) * (1.0 / count)


def reshape(x: Tensor, shape: tuple) -> Tensor:
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def swapaxes(x: Tensor, a: int, b: int) -> Tensor:
    return _result(np.swapaxes(x.data, a, b), (x,), lambda g: (np.swapaxes(g, a, b),), "swapaxes")


def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in items)


def getitem(x: Tensor, idx) -> Tensor:
    basic = _is_basic_index(idx)

    def backward(g):
        full = np.zeros_like(x.data)
        if basic:
            full[idx] += g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return _result(x.data[idx], (x,), backward, "getitem")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def backward(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _result(np.stack([t.data for t in tensors], axis=axis), tensors, backward, "stack")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs operands of rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    return _result(a.data @ b.data, (a, b), backward, "matmul")


def where(cond: np.ndarray, a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    cond = np.asarray(cond, dtype=bool)

    def backward(g):
        return unbroadcast(np.where(cond, g, 0.0), a.shape), unbroadcast(np.where(cond, 0.0, g), b.shape)

    return _result(np.where(cond, a.data, b.data), (a, b), backward, "where")


# ---------------------------------------------------------------- normalisation and losses

def softmax(x: Tensor, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    """Max-shifted softmax; ``mask`` (broadcastable bool) zeroes excluded positions exactly."""
    z = x.data if mask is None else np.where(mask, x.data, MASK_FILL)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _result(y, (x,), backward, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    y = z - lse
    p = np.exp(y)
    return _result(y, (x,), lambda g: (g - p * g.sum(axis=axis, keepdims=True),), "log_softmax")


def cross_entropy(logits: Tensor, target: np.ndarray, reduction: str = "mean") -> Tensor:
    """Cross-entropy of integer targets against logits over the last axis."""
    target = np.asarray(target)
    logp = log_softmax(logits, axis=-1)
    idx = tuple(np.indices(target.shape)) + (target,)
    nll = -getitem(logp, idx)
    return _reduce(nll, reduction)


def nll_from_probs(probs: Tensor, target: np.ndarray, reduction: str = "mean", eps: float = 1e-12) -> Tensor:
    """Negative log-likelihood of integer targets under a probability tensor (last axis)."""
    target = np.asarray(target)
    idx = tuple(np.indices(target.shape)) + (target,)
    nll = -log(getitem(probs, idx), eps=eps)
    return _reduce(nll, reduction)


def _reduce(t: Tensor, reduction: str) -> Tensor:
    if reduction == "mean":
        return mean(t)
    if reduction == "sum":
        return sum_(t)
    if reduction == "none":
        return t
    raise ValueError(f"unknown reduction {reduction!r}")


def dropout(x: Tensor, rate: float, training: bool, rng=None) -> Tensor:
    """Inverted dropout; identity in eval mode or at rate 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _result(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


def scatter_sum(weights: Tensor, ids: np.ndarray, size: int) -> Tensor:
    """Sum position weights into id space.

    ``weights`` has shape ``[..., T, J]`` and ``ids`` shape ``[..., J]`` (shared
    across T).  Returns ``[..., T, size]`` where entry ``v`` collects every
    position ``j`` with ``ids[..., j] == v``.
    """
    ids = np.asarray(ids)
    lead = weights.shape[:-2]
    t_len, j_len = weights.shape[-2:]
    w2 = weights.data.reshape(-1, t_len, j_len)
    ids2 = np.broadcast_to(ids[..., None, :], lead + (t_len, j_len)).reshape(-1, t_len, j_len)
    rows = np.arange(w2.shape[0])[:, None, None]
    steps = np.arange(t_len)[None, :, None]
    out = np.zeros((w2.shape[0], t_len, size))
    np.add.at(out, (rows, steps, ids2), w2)

    def backward(g):
        g2 = g.reshape(-1, t_len, size)
        return (g2[rows, steps, ids2].reshape(weights.shape),)

    return _result(out.reshape(lead + (t_len, size)), (weights,), backward, "scatter_sum")


# ---------------------------------------------------------------- fused recurrent scan

def gru_scan(xproj: Tensor, u: Tensor, mask: Optional[np.ndarray] = None,
             h0: Optional[Tensor] = None) -> Tensor:
    """Run GRU recurrences over time as a single graph node.

    xproj: ``[D, N, T, 3H]`` input projections (``W x + b``) for update, reset
    and candidate gates, one leading slice per independent direction.
    u: ``[D, 3H, H]`` hidden-to-hidden weights stacked in the same gate order.
    mask: ``[D, N, T]`` booleans; a masked step carries the hidden state through.
    h0: ``[D, N, H]`` initial state, zeros when omitted.

    Per step: ``z = s(xz + Uz h)``, ``r = s(xr + Ur h)``,
    ``n = tanh(xn + Un (r*h))``, ``h' = (1-z)*h + z*n``.  Returns ``[D, N, T, H]``.
    """
    xp = xproj.data
    n_dir, batch, steps, three_h = xp.shape
    hid = three_h // 3
    if u.shape != (n_dir, three_h, hid):
        raise ShapeError(f"gru_scan recurrent weights {u.shape} do not match projections {xp.shape}")
    if steps < 1:
        raise ValueError("gru_scan needs at least one time step")
    m = np.ones((n_dir, batch, steps)) if mask is None else np.asarray(mask, dtype=DTYPE)
    u_zr_t = np.swapaxes(u.data[:, :2 * hid], 1, 2)  # [D, H, 2H]
    u_n_t = np.swapaxes(u.data[:, 2 * hid:], 1, 2)   # [D, H, H]

    h = np.zeros((n_dir, batch, hid)) if h0 is None else h0.data
    out = np.empty((n_dir, batch, steps, hid))
    cache_h = np.empty((steps, n_dir, batch, hid))
    cache_z = np.empty_like(cache_h)
    cache_r = np.empty_like(cache_h)
    cache_n = np.empty_like(cache_h)
    for t in range(steps):
        x_t = xp[:, :, t]
        zr = _sigmoid(x_t[..., :2 * hid] + h @ u_zr_t)
        z, r = zr[..., :hid], zr[..., hid:]
        n = np.tanh(x_t[..., 2 * hid:] + (r * h) @ u_n_t)
        mt = m[:, :, t, None]
        cache_h[t], cache_z[t], cache_r[t], cache_n[t] = h, z, r, n
        h = h + mt * z * (n - h)
        out[:, :, t] = h

    def backward(g):
        u_zr = u.data[:, :2 * hid]
        u_n = u.data[:, 2 * hid:]
        dxp = np.empty_like(xp)
        du_zr = np.zeros((n_dir, 2 * hid, hid))
        du_n = np.zeros((n_dir, hid, hid))
        dh = np.zeros((n_dir, batch, hid))
        for t in range(steps - 1, -1, -1):
            hp, z, r, n = cache_h[t], cache_z[t], cache_r[t], cache_n[t]
            mt = m[:, :, t, None]
            gt = g[:, :, t] + dh
            gn = mt * gt
            dh = gt - gn * z
            dn_pre = gn * z * (1.0 - n * n)
            dz_pre = gn * (n - hp) * z * (1.0 - z)
            drh = dn_pre @ u_n
            dr_pre = drh * hp * r * (1.0 - r)
            dh += drh * r
            dzr = np.concatenate([dz_pre, dr_pre], axis=-1)
            dh += dzr @ u_zr
            du_zr += np.swapaxes(dzr, 1, 2) @ hp
            du_n += np.swapaxes(dn_pre, 1, 2) @ (r * hp)
            dxp[:, :, t, :2 * hid] = dzr
            dxp[:, :, t, 2 * hid:] = dn_pre
        du = np.concatenate([du_zr, du_n], axis=1)
        return (dxp, du) + ((dh,) if h0 is not None else ())

    parents = (xproj, u) + ((h0,) if h0 is not None else ())
    return _result(out, parents, backward, "gru_scan")
