"""Dense tensors with reverse-mode automatic differentiation.

A ``Tensor`` wraps a real-valued numpy array (float32 for training,
float64 for verification). Differentiable operations executed inside a
``record(tape)`` block append nodes to the tape; ``backward`` replays
the tape in exact reverse execution order and accumulates gradients
into ``Tensor.grad``. Repeated backward calls accumulate; use
``zero_grads``/``Tape.clear`` between passes.

Elementwise operations broadcast with numpy semantics; ``matmul``
supports an optional leading batch axis on either operand. Forward and
backward on one tape are single-threaded by contract; distinct tapes
are independent.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

from .errors import ContractError, ShapeError

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Tensor:
    """Shaped real array with an optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data: np.ndarray = arr
        self.requires_grad: bool = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # Sugar used by model code; constants are wrapped on the fly.
    def __add__(self, other):
        return add(self, as_tensor(other))

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, as_tensor(other))

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, as_tensor(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))

    def __neg__(self):
        return scale(self, -1.0)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Node:
    """One executed primitive: output plus a closure producing input grads."""

    __slots__ = ("inputs", "output", "backward_fn")

    def __init__(self, inputs: Sequence[Tensor], output: Tensor,
                 backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]]):
        self.inputs = tuple(inputs)
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of executed primitives, replayed backward exactly once."""

    def __init__(self):
        self._nodes: list[Node] = []

    def __len__(self) -> int:
        return len(self._nodes)

    def append(self, node: Node) -> None:
        self._nodes.append(node)

    def clear(self) -> None:
        self._nodes.clear()

    def nodes(self) -> list[Node]:
        return self._nodes


_ACTIVE_TAPE: Tape | None = None


class record:
    """Context manager activating a tape for the operations inside it."""

    def __init__(self, tape: Tape):
        self.tape = tape
        self._prev: Tape | None = None

    def __enter__(self) -> Tape:
        global _ACTIVE_TAPE
        self._prev = _ACTIVE_TAPE
        _ACTIVE_TAPE = self.tape
        return self.tape

    def __exit__(self, *exc) -> None:
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = self._prev


def _register(inputs: Sequence[Tensor], out_data: np.ndarray, backward_fn) -> Tensor:
    """Wrap an op result; record a node when a tape is active and any input needs grad."""
    tape = _ACTIVE_TAPE
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=track)
    if track:
        tape.append(Node(inputs, out, backward_fn))
    return out


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate ``grad`` on every leaf requires_grad tensor reachable from ``loss``.

    ``loss`` must be scalar and must have been produced through ``tape``.
    Intermediate gradients live only for the duration of the pass; leaf
    gradients accumulate across calls (documented), so reset with
    ``zero_grads`` between independent passes.
    """
    if loss.size != 1:
        raise ContractError(f"backward expects a scalar loss, got shape {loss.shape}")
    produced = {id(n.output) for n in tape.nodes()}
    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes()):
        g = pending.pop(id(node.output), None)
        if g is None:
            continue
        input_grads = node.backward_fn(g)
        for t, ig in zip(node.inputs, input_grads):
            if ig is None or not t.requires_grad:
                continue
            key = id(t)
            if key in produced:
                if key in pending:
                    pending[key] = pending[key] + ig
                else:
                    pending[key] = ig
            else:
                t.accumulate_grad(ig)


def zero_grads(tensors: Sequence[Tensor]) -> None:
    for t in tensors:
        t.grad = None


def zero_tape_grads(tape: Tape) -> None:
    """Drop gradients on every tensor the tape touched (inputs and outputs)."""
    for node in tape.nodes():
        node.output.grad = None
        for t in node.inputs:
            t.grad = None


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise / structural ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data
    ash, bsh = a.shape, b.shape

    def bwd(g):
        return _unbroadcast(g, ash), _unbroadcast(g, bsh)

    return _register((a, b), out, bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data
    ash, bsh = a.shape, b.shape

    def bwd(g):
        return _unbroadcast(g, ash), _unbroadcast(-g, bsh)

    return _register((a, b), out, bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data
    ad, bd = a.data, b.data

    def bwd(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _register((a, b), out, bwd)


def scale(a: Tensor, c: float) -> Tensor:
    out = a.data * c

    def bwd(g):
        return (g * c,)

    return _register((a,), out, bwd)


def transpose_last(a: Tensor) -> Tensor:
    """Swap the last two axes."""
    out = np.swapaxes(a.data, -1, -2)

    def bwd(g):
        return (np.swapaxes(g, -1, -2),)

    return _register((a,), out, bwd)


def concat_last(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate along the last (feature) axis."""
    out = np.concatenate([p.data for p in parts], axis=-1)
    widths = [p.shape[-1] for p in parts]

    def bwd(g):
        grads = []
        start = 0
        for w in widths:
            grads.append(g[..., start:start + w])
            start += w
        return grads

    return _register(tuple(parts), out, bwd)


def col_slice(a: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous slice along the last axis."""
    out = a.data[..., start:stop].copy()
    shape = a.shape

    def bwd(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[..., start:stop] = g
        return (full,)

    return _register((a,), out, bwd)


def sum_all(a: Tensor) -> Tensor:
    out = np.asarray(a.data.sum(dtype=a.data.dtype))
    shape = a.shape

    def bwd(g):
        return (np.broadcast_to(g, shape).copy(),)

    return _register((a,), out, bwd)


def mean_axis(a: Tensor, axis: int) -> Tensor:
    """Mean over one axis (no keepdims)."""
    out = a.data.mean(axis=axis)
    n = a.shape[axis]
    shape = a.shape

    def bwd(g):
        ge = np.expand_dims(g, axis=axis)
        return (np.broadcast_to(ge / n, shape).copy(),)

    return _register((a,), out, bwd)


def log_clamped(a: Tensor, floor: float = 1e-12) -> Tensor:
    """log(max(x, floor)); gradient is zero where the clamp is active."""
    clamped = np.maximum(a.data, floor)
    out = np.log(clamped)
    active = a.data > floor

    def bwd(g):
        return (np.where(active, g / clamped, 0.0),)

    return _register((a,), out, bwd)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """C = A @ B with inner dimensions equal; leading batch axes broadcast.

    Backward accumulates dA = dC @ B^T and dB = A^T @ dC (summed over
    broadcast batch axes).
    """
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    out = a.data @ b.data
    ad, bd = a.data, b.data

    def bwd(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _register((a, b), out, bwd)


def _pad_tokens(x: np.ndarray, pad_left: int, pad_right: int) -> np.ndarray:
    if pad_left == 0 and pad_right == 0:
        return x
    pad = [(0, 0)] * x.ndim
    pad[-2] = (pad_left, pad_right)
    return np.pad(x, pad)


def _conv_out_len(n: int, k: int, stride: int, pad_left: int, pad_right: int) -> int:
    n_padded = n + pad_left + pad_right
    if n_padded < k:
        raise ShapeError(f"conv kernel size {k} exceeds padded input length {n_padded}")
    return (n_padded - k) // stride + 1


def conv1d(x: Tensor, kernel: Tensor, bias: Tensor, stride: int = 1,
           pad_left: int = 0, pad_right: int = 0) -> Tensor:
    """Cross-correlation along the token axis.

    x: (..., n, c_in), kernel: (k, c_in, c_out), bias: (c_out,).
    Output (..., n_out, c_out) with n_out = (n + pads - k)//stride + 1.
    """
    k, c_in, c_out = kernel.shape
    if x.shape[-1] != c_in:
        raise ShapeError(f"conv1d channel mismatch: input {x.shape} vs kernel {kernel.shape}")
    n = x.shape[-2]
    n_out = _conv_out_len(n, k, stride, pad_left, pad_right)
    xp = _pad_tokens(x.data, pad_left, pad_right)
    span = stride * (n_out - 1) + 1
    out = np.broadcast_to(bias.data, x.shape[:-2] + (n_out, c_out)).copy()
    for j in range(k):
        out += xp[..., j:j + span:stride, :] @ kernel.data[j]
    kd = kernel.data

    def bwd(g):
        gx_p = np.zeros_like(xp)
        gk = np.zeros_like(kd)
        for j in range(k):
            sl = xp[..., j:j + span:stride, :]
            gx_p[..., j:j + span:stride, :] += g @ kd[j].T
            # sum over batch and token axes -> (c_in, c_out)
            gk[j] = np.tensordot(sl, g, axes=(tuple(range(sl.ndim - 1)), tuple(range(g.ndim - 1))))
        gb = g.reshape(-1, c_out).sum(axis=0)
        gx = gx_p[..., pad_left:pad_left + n, :] if (pad_left or pad_right) else gx_p
        return gx, gk, gb

    return _register((x, kernel, bias), out, bwd)


def conv1d_depthwise(x: Tensor, kernel: Tensor, bias: Tensor, stride: int = 1,
                     pad_left: int = 0, pad_right: int = 0) -> Tensor:
    """Channel-wise token fusion: each channel is convolved with its own taps.

    x: (..., n, c), kernel: (k, c), bias: (c,). Output (..., n_out, c).
    """
    k, c = kernel.shape
    if x.shape[-1] != c:
        raise ShapeError(f"depthwise conv channel mismatch: input {x.shape} vs kernel {kernel.shape}")
    n = x.shape[-2]
    n_out = _conv_out_len(n, k, stride, pad_left, pad_right)
    xp = _pad_tokens(x.data, pad_left, pad_right)
    span = stride * (n_out - 1) + 1
    out = np.broadcast_to(bias.data, x.shape[:-2] + (n_out, c)).copy()
    for j in range(k):
        out += xp[..., j:j + span:stride, :] * kernel.data[j]
    kd = kernel.data

    def bwd(g):
        gx_p = np.zeros_like(xp)
        gk = np.zeros_like(kd)
        for j in range(k):
            sl = xp[..., j:j + span:stride, :]
            gx_p[..., j:j + span:stride, :] += g * kd[j]
            gk[j] = (sl * g).reshape(-1, c).sum(axis=0)
        gb = g.reshape(-1, c).sum(axis=0)
        gx = gx_p[..., pad_left:pad_left + n, :] if (pad_left or pad_right) else gx_p
        return gx, gk, gb

    return _register((x, kernel, bias), out, bwd)


# ---------------------------------------------------------------------------
# normalization / nonlinearities
# ---------------------------------------------------------------------------

def softmax_rows(a: Tensor) -> Tensor:
    """Softmax over the last axis with mandatory max subtraction."""
    if not np.all(np.isfinite(a.data)):
        raise ContractError("softmax_rows: non-finite input")
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        dot = (g * p).sum(axis=-1, keepdims=True)
        return (p * (g - dot),)

    return _register((a,), p, bwd)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row normalization over the last axis (population variance)."""
    d = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data
    gd = gain.data

    def bwd(g):
        gxhat = g * gd
        # d/dx of (x - mu) * inv with mu, var functions of x
        m1 = gxhat.mean(axis=-1, keepdims=True)
        m2 = (gxhat * xhat).mean(axis=-1, keepdims=True)
        gx = inv * (gxhat - m1 - xhat * m2)
        ggain = (g * xhat).reshape(-1, d).sum(axis=0)
        gbias = g.reshape(-1, d).sum(axis=0)
        return gx, ggain, gbias

    return _register((x, gain, bias), out, bwd)


def gelu(x: Tensor) -> Tensor:
    """Exact-erf GELU: x * Phi(x). The tanh approximation is deliberately not used."""
    phi = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    out = x.data * phi
    xd = x.data

    def bwd(g):
        pdf = np.exp(-0.5 * xd * xd) * _INV_SQRT2PI
        return (g * (phi + xd * pdf),)

    return _register((x,), out.astype(x.data.dtype, copy=False), bwd)


def sigmoid(x: Tensor) -> Tensor:
    """Logistic function with symmetric overflow guards."""
    xd = x.data
    out = np.empty_like(xd)
    pos = xd >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ex = np.exp(xd[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bwd(g):
        return (g * out * (1.0 - out),)

    return _register((x,), out, bwd)


def rotate_pairs(x: Tensor, angles: np.ndarray) -> Tensor:
    """Rotate interleaved coordinate pairs (2j, 2j+1) of each row.

    ``angles`` has shape (rows, width//2) and is a constant (no gradient
    path). Rotation preserves the norm of every pair.
    """
    if x.shape[-1] % 2 != 0:
        raise ShapeError(f"rotate_pairs needs an even last axis, got {x.shape}")
    cos = np.cos(angles).astype(x.data.dtype, copy=False)
    sin = np.sin(angles).astype(x.data.dtype, copy=False)
    even = x.data[..., 0::2]
    odd = x.data[..., 1::2]
    out = np.empty_like(x.data)
    out[..., 0::2] = even * cos - odd * sin
    out[..., 1::2] = even * sin + odd * cos

    def bwd(g):
        ge = g[..., 0::2]
        go = g[..., 1::2]
        gx = np.empty_like(g)
        gx[..., 0::2] = ge * cos + go * sin
        gx[..., 1::2] = -ge * sin + go * cos
        return (gx,)

    return _register((x,), out, bwd)
