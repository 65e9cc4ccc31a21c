"""Minimal reverse-mode gradient tape over numpy arrays.

Supports exactly the primitives the training losses need: elementwise
arithmetic, affine maps, 1-D convolution over the horizon axis (stride 1,
"same" padding), pooling/upsampling by factor 2, channel concatenation,
ReLU/tanh, and mean/sum reductions.  Anything outside this set fails at
graph-construction time.

Graphs are built eagerly by calling the op functions on `Tensor` values;
`backward(loss)` runs the reverse sweep and leaves gradients on every
tensor created with ``needs_grad=True``.  The tape is dtype-generic: it
computes in whatever float dtype the inputs carry, so the same network code
runs in float32 for training and float64 for finite-difference checks.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    """A node in the computation graph."""

    __slots__ = ("value", "grad", "needs_grad", "_parents", "_backward")

    def __init__(self, value, needs_grad=False, parents=(), backward=None):
        self.value = np.asarray(value)
        self.grad = None
        self.needs_grad = bool(needs_grad)
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        return float(self.value)

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, needs_grad={self.needs_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x))


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum gradient ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _node(value, parents, backward) -> Tensor:
    needs = any(p.needs_grad for p in parents)
    return Tensor(value, needs_grad=needs, parents=parents,
                  backward=backward if needs else None)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_value = a.value + b.value

    def bwd(g):
        if a.needs_grad:
            _accumulate(a, _unbroadcast(g, a.value.shape))
        if b.needs_grad:
            _accumulate(b, _unbroadcast(g, b.value.shape))

    return _node(out_value, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_value = a.value - b.value

    def bwd(g):
        if a.needs_grad:
            _accumulate(a, _unbroadcast(g, a.value.shape))
        if b.needs_grad:
            _accumulate(b, _unbroadcast(-g, b.value.shape))

    return _node(out_value, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_value = a.value * b.value

    def bwd(g):
        if a.needs_grad:
            _accumulate(a, _unbroadcast(g * b.value, a.value.shape))
        if b.needs_grad:
            _accumulate(b, _unbroadcast(g * a.value, b.value.shape))

    return _node(out_value, (a, b), bwd)


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)

    def bwd(g):
        if a.needs_grad:
            _accumulate(a, g * c)

    return _node(a.value * c, (a,), bwd)


def square(a) -> Tensor:
    a = as_tensor(a)

    def bwd(g):
        if a.needs_grad:
            _accumulate(a, g * (2.0 * a.value))

    return _node(a.value * a.value, (a,), bwd)


def relu(a) -> Tensor:
    a = as_tensor(a)
    out_value = np.maximum(a.value, 0.0)

    def bwd(g):
        if a.needs_grad:
            _accumulate(a, g * (a.value > 0))

    return _node(out_value, (a,), bwd)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out_value = np.tanh(a.value)

    def bwd(g):
        if a.needs_grad:
            _accumulate(a, g * (1.0 - out_value * out_value))

    return _node(out_value, (a,), bwd)


def matmul(a, b) -> Tensor:
    """2-D matrix product; the affine primitive is x @ W + b."""
    a, b = as_tensor(a), as_tensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise TypeError("matmul supports 2-D operands only")
    out_value = a.value @ b.value

    def bwd(g):
        if a.needs_grad:
            _accumulate(a, g @ b.value.T)
        if b.needs_grad:
            _accumulate(b, a.value.T @ g)

    return _node(out_value, (a, b), bwd)


def _corr1d(x: np.ndarray, w: np.ndarray, pad: int) -> tuple:
    """Raw correlation of (B, C, H) with (O, C, K) at symmetric padding.

    One fat GEMM over every kernel offset at once, then shifted
    accumulation; much faster than im2col on narrow kernels because
    nothing gets duplicated K-fold.  Returns (y, xp) where ``xp`` is the
    padded input in channel-major (C, B, Hp) layout for the backward pass.
    """
    batch, in_ch, length = x.shape
    out_ch, _, kernel = w.shape
    hp = length + 2 * pad
    out_len = hp - kernel + 1
    xp = np.zeros((in_ch, batch, hp), dtype=x.dtype)
    xp[:, :, pad:pad + length] = x.transpose(1, 0, 2)
    m = w.transpose(0, 2, 1).reshape(out_ch * kernel, in_ch) @ xp.reshape(
        in_ch, batch * hp)
    m = m.reshape(out_ch, kernel, batch, hp)
    y = m[:, 0, :, :out_len].copy()
    for k in range(1, kernel):
        y += m[:, k, :, k:k + out_len]
    return np.ascontiguousarray(y.transpose(1, 0, 2)), xp


def conv1d(x, w, b, pad=None) -> Tensor:
    """1-D convolution over the horizon axis, stride 1, "same" padding.

    ``x``: (B, C_in, H), ``w``: (C_out, C_in, K) with odd K, ``b``: (C_out,).
    """
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    out_ch, in_ch, kernel = w.value.shape
    if kernel % 2 != 1:
        raise TypeError("conv1d requires an odd kernel size")
    if x.value.ndim != 3 or x.value.shape[1] != in_ch:
        raise TypeError(
            f"conv1d input shape {x.value.shape} incompatible with kernel {w.value.shape}"
        )
    if pad is None:
        pad = (kernel - 1) // 2
    if pad != (kernel - 1) // 2:
        raise TypeError("conv1d supports 'same' padding only")
    y, xp = _corr1d(x.value, w.value, pad)
    out_value = y + b.value[None, :, None]
    batch, _, length = x.value.shape
    hp = length + 2 * pad

    def bwd(g):
        # dy w.r.t. the per-offset GEMM output, shared by dw and dx
        gt = np.ascontiguousarray(g.transpose(1, 0, 2))
        dm = np.zeros((out_ch, kernel, batch, hp), dtype=gt.dtype)
        for k in range(kernel):
            dm[:, k, :, k:k + length] += gt
        dm2 = dm.reshape(out_ch * kernel, batch * hp)
        if w.needs_grad:
            dw = dm2 @ xp.reshape(in_ch, batch * hp).T
            _accumulate(w, dw.reshape(out_ch, kernel, in_ch).transpose(0, 2, 1))
        if b.needs_grad:
            _accumulate(b, g.sum(axis=(0, 2)))
        if x.needs_grad:
            w2 = w.value.transpose(0, 2, 1).reshape(out_ch * kernel, in_ch)
            dxp = (w2.T @ dm2).reshape(in_ch, batch, hp)
            _accumulate(x, np.ascontiguousarray(
                dxp[:, :, pad:pad + length].transpose(1, 0, 2)))

    return _node(out_value, (x, w, b), bwd)


def avg_pool2(x) -> Tensor:
    """Average pooling with window 2 over the horizon axis."""
    x = as_tensor(x)
    batch, ch, length = x.value.shape
    if length % 2 != 0:
        raise TypeError("avg_pool2 requires an even horizon")
    out_value = x.value.reshape(batch, ch, length // 2, 2).mean(axis=3)

    def bwd(g):
        if x.needs_grad:
            _accumulate(x, np.repeat(g * 0.5, 2, axis=2))

    return _node(out_value, (x,), bwd)


def upsample2(x) -> Tensor:
    """Nearest-neighbour upsampling by 2 over the horizon axis."""
    x = as_tensor(x)
    batch, ch, length = x.value.shape
    out_value = np.repeat(x.value, 2, axis=2)

    def bwd(g):
        if x.needs_grad:
            _accumulate(x, g.reshape(batch, ch, length, 2).sum(axis=3))

    return _node(out_value, (x,), bwd)


def concat_channels(parts) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    out_value = np.concatenate([p.value for p in parts], axis=1)
    sizes = [p.value.shape[1] for p in parts]

    def bwd(g):
        start = 0
        for p, size in zip(parts, sizes):
            if p.needs_grad:
                _accumulate(p, g[:, start:start + size])
            start += size

    return _node(out_value, tuple(parts), bwd)


def broadcast_time(x, length: int) -> Tensor:
    """Tile (B, C) features along a new horizon axis -> (B, C, H)."""
    x = as_tensor(x)
    out_value = np.broadcast_to(x.value[:, :, None],
                                x.value.shape + (length,)).copy()

    def bwd(g):
        if x.needs_grad:
            _accumulate(x, g.sum(axis=2))

    return _node(out_value, (x,), bwd)


def mean(x, axes=None) -> Tensor:
    x = as_tensor(x)
    if axes is None:
        count = x.value.size
        out_value = x.value.mean()

        def bwd(g):
            if x.needs_grad:
                _accumulate(x, np.full_like(x.value, g / count))

        return _node(out_value, (x,), bwd)

    axes = tuple(axes)
    count = int(np.prod([x.value.shape[a] for a in axes]))
    out_value = x.value.mean(axis=axes)

    def bwd(g):
        if x.needs_grad:
            _accumulate(x, np.broadcast_to(
                np.expand_dims(g, axes) / count, x.value.shape))

    return _node(out_value, (x,), bwd)


def total_sum(x) -> Tensor:
    x = as_tensor(x)

    def bwd(g):
        if x.needs_grad:
            _accumulate(x, np.full_like(x.value, g))

    return _node(x.value.sum(), (x,), bwd)


def backward(loss: Tensor) -> None:
    """Reverse sweep from a scalar loss, accumulating ``grad`` on leaves."""
    if loss.value.ndim != 0:
        raise TypeError("backward requires a scalar loss")
    topo = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited or not node.needs_grad:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            stack.append((parent, False))

    loss.grad = np.asarray(1.0, dtype=loss.value.dtype)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
