"""Reverse-mode differentiation over the handful of layers a 1D U-Net needs, plus Adam.

Tensors are ``(batch, channels, length)`` numpy arrays. Each op returns a
new :class:`Tensor` that remembers its parents and a closure mapping the
output gradient to parent gradients; :func:`backward` replays those
closures in reverse topological order.

The dtype of the data decides the precision: float64 for gradient
checks, float32 for training.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import GraphConsumed, InputTooShort, PdetError, ShapeMismatch

__all__ = [
    "Tensor",
    "Param",
    "AdamState",
    "DegenerateBatch",
    "BatchNormState",
    "conv1d_same",
    "batchnorm1d",
    "relu",
    "tanh",
    "avgpool1d",
    "upsample_nearest",
    "concat_channels",
    "backward",
    "adam_step",
    "zero_grad",
]

BN_MOMENTUM = 0.1
BN_VAR_FLOOR = 1e-5


class DegenerateBatch(PdetError, ValueError):
    """Train-mode batch norm needs at least two values per channel."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = np.asarray(data, dtype=dtype)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


class Param(Tensor):
    """A named leaf whose gradient accumulates across backward passes."""

    __slots__ = ("name",)

    def __init__(self, value, name):
        super().__init__(value, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, fn):
    out = Tensor(data)
    parents = tuple(p for p in parents if p.requires_grad)
    if parents:
        out.requires_grad = True
        out._parents = parents
        out._backward = fn
    return out


def _check3(x, what):
    if x.data.ndim != 3:
        raise ShapeMismatch(f"{what} expects (batch, channels, length), got {x.data.shape}")


def conv1d_same(x, weight, bias):
    """Zero-padded, length-preserving 1D cross-correlation.

    ``weight`` has shape ``(out_ch, in_ch, k)`` with ``k`` odd.
    """
    x, weight, bias = _wrap(x), _wrap(weight), _wrap(bias)
    _check3(x, "conv1d_same")
    out_ch, in_ch, k = weight.data.shape
    if k % 2 != 1:
        raise ShapeMismatch(f"kernel size must be odd, got {k}")
    if x.data.shape[1] != in_ch:
        raise ShapeMismatch(f"input has {x.data.shape[1]} channels, weight expects {in_ch}")
    if bias.data.shape != (out_ch,):
        raise ShapeMismatch("bias shape must be (out_ch,)")
    pad = k // 2
    n, _, length = x.data.shape
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad)))
    cols = sliding_window_view(xp, k, axis=2)  # (n, in_ch, length, k)
    y = np.tensordot(cols, weight.data, axes=([1, 3], [1, 2]))  # (n, length, out_ch)
    y = y.transpose(0, 2, 1) + bias.data[None, :, None]

    def fn(g):
        if weight.requires_grad:
            weight._accumulate(np.tensordot(g, cols, axes=([0, 2], [0, 2])))
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2)))
        if x.requires_grad:
            dcols = np.tensordot(g, weight.data, axes=([1], [0]))  # (n, length, in_ch, k)
            dxp = np.zeros_like(xp)
            for j in range(k):
                dxp[:, :, j:j + length] += dcols[:, :, :, j].transpose(0, 2, 1)
            x._accumulate(dxp[:, :, pad:pad + length])

    return _node(np.ascontiguousarray(y), (x, weight, bias), fn)


@dataclass
class BatchNormState:
    """Running statistics used by batch norm in eval mode."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = BN_MOMENTUM

    @classmethod
    def fresh(cls, channels, dtype=np.float64):
        return cls(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype))


def batchnorm1d(x, gamma, beta, state, mode="train"):
    """Per-channel batch normalization over batch and length.

    In train mode the biased batch variance (floored at ``1e-5``) is used
    and ``state`` is updated in place with momentum; in eval mode the
    running statistics are used instead.
    """
    x, gamma, beta = _wrap(x), _wrap(gamma), _wrap(beta)
    _check3(x, "batchnorm1d")
    n, c, length = x.data.shape
    dt = x.data.dtype
    if mode == "train":
        m = n * length
        if m < 2:
            raise DegenerateBatch("train-mode batch norm needs batch * length >= 2")
        mu = x.data.mean(axis=(0, 2))
        var = x.data.var(axis=(0, 2))
        floored = var < BN_VAR_FLOOR
        v = np.maximum(var, BN_VAR_FLOOR)
        mom = state.momentum
        state.running_mean = ((1 - mom) * state.running_mean + mom * mu).astype(state.running_mean.dtype)
        state.running_var = ((1 - mom) * state.running_var + mom * var * (m / (m - 1))).astype(
            state.running_var.dtype
        )
    elif mode == "eval":
        mu = state.running_mean.astype(dt)
        v = np.maximum(state.running_var, BN_VAR_FLOOR).astype(dt)
    else:
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    inv = (1.0 / np.sqrt(v)).astype(dt)
    xhat = (x.data - mu[None, :, None]) * inv[None, :, None]
    y = gamma.data[None, :, None] * xhat + beta.data[None, :, None]

    def fn(g):
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).sum(axis=(0, 2)))
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=(0, 2)))
        if not x.requires_grad:
            return
        dxhat = g * gamma.data[None, :, None]
        if mode == "eval":
            x._accumulate(dxhat * inv[None, :, None])
            return
        mean_d = dxhat.mean(axis=(0, 2), keepdims=True)
        mean_dx = (dxhat * xhat).mean(axis=(0, 2), keepdims=True)
        # a floored channel has a constant denominator, so the variance path drops out
        mean_dx[:, floored, :] = 0.0
        x._accumulate((dxhat - mean_d - xhat * mean_dx) * inv[None, :, None])

    return _node(y, (x, gamma, beta), fn)


def relu(x):
    x = _wrap(x)
    mask = x.data > 0
    return _node(np.where(mask, x.data, 0).astype(x.data.dtype), (x,), lambda g: x._accumulate(g * mask))


def tanh(x):
    x = _wrap(x)
    y = np.tanh(x.data)
    return _node(y, (x,), lambda g: x._accumulate(g * (1 - y * y)))


def avgpool1d(x, k):
    """Non-overlapping mean pooling; a tail shorter than ``k`` is dropped."""
    x = _wrap(x)
    _check3(x, "avgpool1d")
    k = int(k)
    if k < 2:
        raise ValueError("pool size must be >= 2")
    n, c, length = x.data.shape
    if length < k:
        raise InputTooShort(f"length {length} is shorter than pool size {k}")
    lo = length // k
    y = x.data[:, :, :lo * k].reshape(n, c, lo, k).mean(axis=3)

    def fn(g):
        dx = np.zeros_like(x.data)
        dx[:, :, :lo * k] = np.repeat(g / k, k, axis=2)
        x._accumulate(dx)

    return _node(y, (x,), fn)


def upsample_nearest(x, k):
    x = _wrap(x)
    _check3(x, "upsample_nearest")
    k = int(k)
    if k < 2:
        raise ValueError("upsample factor must be >= 2")
    n, c, length = x.data.shape
    y = np.repeat(x.data, k, axis=2)
    return _node(y, (x,), lambda g: x._accumulate(g.reshape(n, c, length, k).sum(axis=3)))


def concat_channels(a, b):
    a, b = _wrap(a), _wrap(b)
    _check3(a, "concat_channels")
    _check3(b, "concat_channels")
    if a.data.shape[0] != b.data.shape[0] or a.data.shape[2] != b.data.shape[2]:
        raise ShapeMismatch(f"cannot stack {a.data.shape} with {b.data.shape}")
    ca = a.data.shape[1]
    y = np.concatenate([a.data, b.data], axis=1)

    def fn(g):
        if a.requires_grad:
            a._accumulate(g[:, :ca])
        if b.requires_grad:
            b._accumulate(g[:, ca:])

    return _node(y, (a, b), fn)


def _topo(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
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


def backward(output, output_grad):
    """Propagate ``output_grad`` from ``output`` to every :class:`Param` below it.

    Parameter gradients are added to whatever is already stored, so call
    :func:`zero_grad` between optimizer steps. A graph can be replayed
    only once.
    """
    if output._consumed:
        raise GraphConsumed("backward already ran on this graph; run a new forward pass")
    g = np.asarray(output_grad, dtype=output.data.dtype)
    if g.shape != output.data.shape:
        raise ShapeMismatch(f"output_grad shape {g.shape} != output shape {output.data.shape}")
    output._consumed = True
    if not output.requires_grad:
        return
    order = _topo(output)
    for node in order:
        if node._backward is not None:
            node.grad = None
    output.grad = g.copy()
    for node in reversed(order):
        fn = node._backward
        if fn is None or node.grad is None:
            continue
        fn(node.grad)
        node._backward = None
        node._parents = ()
        node.grad = None


def zero_grad(params):
    for p in params:
        p.grad = np.zeros_like(p.data)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, state):
    """One bias-corrected Adam update of ``params`` in place."""
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for p in params:
        g = p.grad
        if p.name not in state.m:
            state.m[p.name] = np.zeros_like(p.data)
            state.v[p.name] = np.zeros_like(p.data)
        m, v = state.m[p.name], state.v[p.name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= (state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps_adam)).astype(p.data.dtype)
    return params, state
