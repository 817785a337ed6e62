"""A small graph-based reverse-mode autodiff over numpy arrays.

Each op returns a :class:`Tensor` that remembers its parents and a closure
mapping the output gradient to parent gradients. ``backward`` walks the graph
in reverse topological order. Only the ops the forecaster needs are provided.
"""

from __future__ import annotations

import contextlib

import numpy as np

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")
    # make ndarray <op> Tensor dispatch to the Tensor's reflected operator
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def backward(self, grad=None):
        if grad is None:
            grad = np.ones_like(self.data)
        order, seen = [], set()

        def visit(node):
            stack = [(node, False)]
            while stack:
                n, done = stack.pop()
                if done:
                    order.append(n)
                    continue
                if id(n) in seen:
                    continue
                seen.add(id(n))
                stack.append((n, True))
                for p in n._parents:
                    if p.requires_grad and id(p) not in seen:
                        stack.append((p, False))

        visit(self)
        grads = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for p, pg in zip(node._parents, node._backward(g)):
                if pg is None or not p.requires_grad:
                    continue
                if id(p) in grads:
                    grads[id(p)] = grads[id(p)] + pg
                else:
                    grads[id(p)] = pg


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward):
    parents = tuple(parents)
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, True, parents, backward)
    return Tensor(data)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def neg(a):
    return _make(-a.data, (a,), lambda g: (-g,))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def matmul(a, b):
    """``a @ b`` where ``b`` is 2-D and ``a`` has any number of leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    out = a.data @ b.data

    def back(g):
        ga = g @ b.data.T
        a2 = a.data.reshape(-1, a.shape[-1])
        gb = a2.T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _make(out, (a, b), back)


def tanh(a):
    y = np.tanh(a.data)
    return _make(y, (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a):
    y = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _make(y, (a,), lambda g: (g * y * (1.0 - y),))


def relu(a):
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,))


def leaky_relu(a, slope=0.4):
    mask = a.data > 0
    k = np.where(mask, 1.0, slope)
    return _make(a.data * k, (a,), lambda g: (g * k,))


def silu(a):
    return mul(a, sigmoid(a))


def getitem(a, idx):
    def back(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return _make(a.data[idx], (a,), back)


def reshape(a, shape):
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, back)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]

    def back(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _make(np.stack([t.data for t in tensors], axis=axis), tensors, back)


def mean(a):
    n = a.data.size
    return _make(a.data.mean(), (a,), lambda g: (np.full(a.shape, g / n),))


def conv1d(x, w, b, dilation=1):
    """Dilated 'same' convolution in channels-last layout.

    x: (B, L, Cin); w: (Cout, Cin, K) with K odd; b: (Cout,). Output (B, L, Cout).
    """
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    B, L, cin = x.shape
    cout, cin_w, K = w.shape
    if cin != cin_w:
        raise ValueError(f"conv1d expects {cin_w} input channels, got {cin}")
    pad = dilation * (K - 1) // 2
    xp = np.pad(x.data, ((0, 0), (pad, pad), (0, 0)))
    # taps whose offset reaches past the sequence only ever read padding
    taps = [k for k in range(K) if abs(k * dilation - pad) < L]
    T = len(taps)
    cols = np.stack([xp[:, k * dilation:k * dilation + L, :] for k in taps], axis=2)
    cols2 = cols.reshape(B * L, T * cin)
    wt = w.data[:, :, taps]
    w2 = wt.transpose(2, 1, 0).reshape(T * cin, cout)
    out = (cols2 @ w2).reshape(B, L, cout) + b.data

    def back(g):
        g2 = g.reshape(B * L, cout)
        gw = np.zeros_like(w.data)
        gw[:, :, taps] = (cols2.T @ g2).reshape(T, cin, cout).transpose(2, 1, 0)
        gb = g2.sum(axis=0)
        gcols = (g2 @ w2.T).reshape(B, L, T, cin)
        gxp = np.zeros_like(xp)
        for j, k in enumerate(taps):
            gxp[:, k * dilation:k * dilation + L, :] += gcols[:, :, j, :]
        return gxp[:, pad:pad + L, :], gw, gb

    return _make(out, (x, w, b), back)


def smooth_l1(a, b):
    """Mean Huber-style loss with unit transition point."""
    a, b = as_tensor(a), as_tensor(b)
    d = a.data - b.data
    ad = np.abs(d)
    small = ad < 1.0
    val = np.where(small, 0.5 * d * d, ad - 0.5).mean()
    n = d.size

    def back(g):
        gd = np.where(small, d, np.sign(d)) * (g / n)
        return gd, -gd

    return _make(val, (a, b), back)
