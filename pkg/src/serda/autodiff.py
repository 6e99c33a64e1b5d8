"""Reverse-mode automatic differentiation over dense float64 arrays.

A ``Tensor`` is a numpy array plus the graph bookkeeping needed to
backpropagate from a scalar root to every leaf that produced it.  All
arithmetic is 64-bit, all operations are deterministic, and broadcasting is
deliberately restricted to a single case (adding a 1-D bias over the
trailing axis) so every backward rule stays auditable and can be verified
against finite differences in isolation.

Graphs are built afresh for every training step and garbage-collected with
their root; leaves carry gradients only after ``backward`` runs.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from .errors import ContractError, DomainError, ShapeError

Array = np.ndarray

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Tensor:
    """A float64 array node in the differentiation graph.

    ``data`` holds the value, ``parents`` the nodes it was computed from,
    and ``grad`` accumulates d(root)/d(self) during :func:`backward`.
    Leaves are built directly from array data; operations attach a closure
    mapping the output gradient onto the parents.
    """

    __slots__ = ("data", "grad", "parents", "_rule", "name")

    def __init__(self, data, parents=(), rule=None, name: str = ""):
        self.data: Array = np.asarray(data, dtype=np.float64)
        self.grad: Array | None = None
        self.parents: tuple[Tensor, ...] = tuple(parents)
        self._rule = rule
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data)

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    # operators ----------------------------------------------------------
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def sum(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, shape: Sequence[int]) -> "Tensor":
        return reshape(self, shape)

    def transpose(self, axes: Sequence[int] | None = None) -> "Tensor":
        return transpose(self, axes)

    def backward(self) -> None:
        backward(self)


def _topological_order(root: Tensor) -> list[Tensor]:
    """Parents-before-consumers ordering of the graph below ``root``."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(root: Tensor) -> None:
    """Populate ``grad`` on every tensor reachable from the scalar ``root``.

    A leaf consumed by several operations receives the sum of all
    contributions.  Gradients from a previous backward pass are discarded;
    graphs are meant to be single-use.
    """
    if root.data.size != 1:
        raise ContractError(f"backward requires a scalar root, got shape {root.shape}")
    order = _topological_order(root)
    for node in order:
        node.grad = None
    root.grad = np.ones_like(root.data)
    for node in reversed(order):
        if node._rule is None or node.grad is None:
            continue
        for parent, g in zip(node.parents, node._rule(node.grad)):
            if g is None:
                continue
            if parent.grad is None:
                parent.grad = np.array(g, dtype=np.float64, copy=True)
            else:
                parent.grad += g


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; also accepts a 1-D bias added over the trailing axis."""
    if a.shape == b.shape:
        return Tensor(a.data + b.data, (a, b), lambda g: (g, g))
    if b.ndim == 1 and a.ndim >= 2 and a.shape[-1] == b.shape[0]:
        lead = tuple(range(a.ndim - 1))
        return Tensor(a.data + b.data, (a, b), lambda g: (g, g.sum(axis=lead)))
    raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"sub: incompatible shapes {a.shape} and {b.shape}")
    return Tensor(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    return Tensor(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return Tensor(a.data * s, (a,), lambda g: (g * s,))


def scale_by(a: Tensor, s: Tensor) -> Tensor:
    """Multiply every element of ``a`` by the scalar tensor ``s``."""
    if s.data.size != 1:
        raise ShapeError(f"scale_by requires a scalar multiplier, got shape {s.shape}")
    sval = float(s.data)

    def rule(g: Array):
        return g * sval, np.asarray((g * a.data).sum()).reshape(s.shape)

    return Tensor(a.data * sval, (a, s), rule)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; batched when ndim > 2 with identical leading axes."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul requires ndim >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def rule(g: Array):
        return (
            np.matmul(g, np.swapaxes(b.data, -1, -2)),
            np.matmul(np.swapaxes(a.data, -1, -2), g),
        )

    return Tensor(np.matmul(a.data, b.data), (a, b), rule)


# ---------------------------------------------------------------------------
# elementwise nonlinearities


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0.0
    return Tensor(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def gelu(a: Tensor) -> Tensor:
    """Exact Gaussian error linear unit, x * Phi(x)."""
    cdf = 0.5 * (1.0 + erf(a.data * _INV_SQRT2))
    pdf = _INV_SQRT2PI * np.exp(-0.5 * a.data * a.data)
    return Tensor(a.data * cdf, (a,), lambda g: (g * (cdf + a.data * pdf),))


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)
    return Tensor(out_data, (a,), lambda g: (g * out_data,))


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise DomainError("log requires strictly positive input")
    return Tensor(np.log(a.data), (a,), lambda g: (g / a.data,))


def clamp_min(a: Tensor, floor: float) -> Tensor:
    """max(x, floor) with a pass-through subgradient where x >= floor."""
    floor = float(floor)
    mask = a.data >= floor
    return Tensor(np.maximum(a.data, floor), (a,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# reductions and normalizations


def sum_(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    def rule(g: Array):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        ge = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(ge, a.shape).copy(),)

    return Tensor(a.data.sum(axis=axis, keepdims=keepdims), (a,), rule)


def mean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else a.shape[axis]

    def rule(g: Array):
        if axis is None:
            return (np.broadcast_to(g / count, a.shape).copy(),)
        ge = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(ge / count, a.shape).copy(),)

    return Tensor(a.data.mean(axis=axis, keepdims=keepdims), (a,), rule)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Numerically stabilized softmax along ``axis``."""
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def rule(g: Array):
        inner = (g * out_data).sum(axis=axis, keepdims=True)
        return ((g - inner) * out_data,)

    return Tensor(out_data, (a,), rule)


def l2_normalize(a: Tensor, axis: int = -1) -> Tensor:
    norms = np.linalg.norm(a.data, axis=axis, keepdims=True)
    if np.any(norms == 0.0):
        raise DomainError("l2_normalize: zero-norm slice")
    out_data = a.data / norms

    def rule(g: Array):
        inner = (g * out_data).sum(axis=axis, keepdims=True)
        return ((g - out_data * inner) / norms,)

    return Tensor(out_data, (a,), rule)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the trailing axis, then apply per-feature gain and bias."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm: gain/bias must be ({d},), got {gain.shape}, {bias.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_data = xhat * gain.data + bias.data

    def rule(g: Array):
        lead = tuple(range(g.ndim - 1))
        dxhat = g * gain.data
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return Tensor(out_data, (x, gain, bias), rule)


# ---------------------------------------------------------------------------
# structural ops


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    return Tensor(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return Tensor(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),))


def stack_rows(tensors: Sequence[Tensor]) -> Tensor:
    """Stack equally shaped tensors along a new leading axis."""
    if not tensors:
        raise ShapeError("stack_rows: empty sequence")
    first = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != first:
            raise ShapeError(f"stack_rows: mixed shapes {first} and {t.shape}")

    def rule(g: Array):
        return tuple(g[i] for i in range(len(tensors)))

    return Tensor(np.stack([t.data for t in tensors]), tuple(tensors), rule)


_UNFOLD_IDX_CACHE: dict[tuple[int, int, int, int, int], Array] = {}


def _unfold_indices(t: int, kernel: int, stride: int, pad_left: int, pad_right: int) -> Array:
    key = (t, kernel, stride, pad_left, pad_right)
    idx = _UNFOLD_IDX_CACHE.get(key)
    if idx is None:
        frames = (t + pad_left + pad_right - kernel) // stride + 1
        idx = (np.arange(frames)[:, None] * stride + np.arange(kernel)[None, :]).reshape(-1)
        _UNFOLD_IDX_CACHE[key] = idx
    return idx


def unfold1d(x: Tensor, kernel: int, stride: int, pad_left: int = 0, pad_right: int = 0) -> Tensor:
    """Extract strided windows from a [time, channels] tensor.

    Returns a [frames, kernel*channels] tensor whose row f flattens the
    window starting at time f*stride - pad_left, kernel-position major.
    Zero padding is applied at the edges.
    """
    if x.ndim != 2:
        raise ShapeError(f"unfold1d expects [time, channels], got {x.shape}")
    t, c = x.shape
    if t + pad_left + pad_right < kernel:
        raise ShapeError(f"unfold1d: input length {t} shorter than kernel {kernel}")
    xp = np.pad(x.data, ((pad_left, pad_right), (0, 0))) if (pad_left or pad_right) else x.data
    windows = sliding_window_view(xp, kernel, axis=0)[::stride]  # [frames, c, kernel]
    frames = windows.shape[0]
    out_data = np.ascontiguousarray(windows.transpose(0, 2, 1)).reshape(frames, kernel * c)
    idx = _unfold_indices(t, kernel, stride, pad_left, pad_right)

    def rule(g: Array):
        gxp = np.zeros((t + pad_left + pad_right, c))
        np.add.at(gxp, idx, g.reshape(frames * kernel, c))
        return (gxp[pad_left : pad_left + t],)

    return Tensor(out_data, (x,), rule)
