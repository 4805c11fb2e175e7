"""Reverse-mode differentiable tensors over float64 numpy arrays.

The op set is deliberately small: exactly what the training objectives and
the backbone need (conv2d, dense via matmul, ReLU, mean/sum, elementwise
arithmetic, L2 normalization, softmax, log). Each op records a closure that
propagates the output gradient to its parents; `backward` walks the recorded
graph in reverse topological order.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import ContractError, NonFiniteError, ShapeMismatchError, ZeroNormError

Array = np.ndarray


def _as_f64(values) -> Array:
    arr = np.asarray(values, dtype=np.float64)
    return arr


class Tensor:
    """A float64 array plus the bookkeeping needed for the reverse pass."""

    __slots__ = ("values", "requires_grad", "grad", "_parents", "_backward")

    def __init__(
        self,
        values,
        requires_grad: bool = False,
        _parents: tuple["Tensor", ...] = (),
        _backward: Callable[[Array], None] | None = None,
    ):
        self.values = _as_f64(values)
        self.requires_grad = bool(requires_grad)
        self.grad: Array | None = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        if self.values.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.values.reshape(()))

    def accumulate_grad(self, g: Array) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.values.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; scalars and ndarrays are treated as constants
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)


def as_tensor(x) -> Tensor:
    """Wrap scalars/arrays as constant tensors; pass tensors through."""
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _tracked(*parents: Tensor) -> bool:
    return any(p.requires_grad or p._parents for p in parents)


def _make(values: Array, parents: tuple[Tensor, ...], backward: Callable[[Array], None]) -> Tensor:
    if _tracked(*parents):
        return Tensor(values, requires_grad=False, _parents=parents, _backward=backward)
    return Tensor(values)


def _check_finite(arr: Array, op: str) -> Array:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values produced by {op}")
    return arr


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_values = a.values + b.values

    def backward(g: Array) -> None:
        a.accumulate_grad(_unbroadcast(g, a.values.shape))
        b.accumulate_grad(_unbroadcast(g, b.values.shape))

    return _make(out_values, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_values = a.values - b.values

    def backward(g: Array) -> None:
        a.accumulate_grad(_unbroadcast(g, a.values.shape))
        b.accumulate_grad(_unbroadcast(-g, b.values.shape))

    return _make(out_values, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_values = a.values * b.values

    def backward(g: Array) -> None:
        a.accumulate_grad(_unbroadcast(g * b.values, a.values.shape))
        b.accumulate_grad(_unbroadcast(g * a.values, b.values.shape))

    return _make(out_values, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_values = _check_finite(a.values / b.values, "div")

    def backward(g: Array) -> None:
        a.accumulate_grad(_unbroadcast(g / b.values, a.values.shape))
        b.accumulate_grad(_unbroadcast(-g * a.values / (b.values * b.values), b.values.shape))

    return _make(out_values, (a, b), backward)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out_values = _check_finite(np.exp(a.values), "exp")

    def backward(g: Array) -> None:
        a.accumulate_grad(g * out_values)

    return _make(out_values, (a,), backward)


def log(a) -> Tensor:
    a = as_tensor(a)
    out_values = _check_finite(np.log(a.values), "log")

    def backward(g: Array) -> None:
        a.accumulate_grad(g / a.values)

    return _make(out_values, (a,), backward)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out_values = _check_finite(np.sqrt(a.values), "sqrt")

    def backward(g: Array) -> None:
        a.accumulate_grad(g * 0.5 / out_values)

    return _make(out_values, (a,), backward)


def relu(a) -> Tensor:
    a = as_tensor(a)
    out_values = np.maximum(a.values, 0.0)

    def backward(g: Array) -> None:
        a.accumulate_grad(g * (a.values > 0.0))

    return _make(out_values, (a,), backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeMismatchError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out_values = _check_finite(a.values @ b.values, "matmul")

    def backward(g: Array) -> None:
        a.accumulate_grad(g @ b.values.T)
        b.accumulate_grad(a.values.T @ g)

    return _make(out_values, (a, b), backward)


def transpose2d(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeMismatchError(f"transpose2d expects a matrix, got {a.shape}")
    out_values = a.values.T.copy()

    def backward(g: Array) -> None:
        a.accumulate_grad(g.T)

    return _make(out_values, (a,), backward)


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    out_values = a.values.reshape(shape)

    def backward(g: Array) -> None:
        a.accumulate_grad(g.reshape(a.values.shape))

    return _make(out_values, (a,), backward)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out_values = a.values.sum(axis=axis, keepdims=keepdims)

    def backward(g: Array) -> None:
        if axis is None:
            a.accumulate_grad(np.broadcast_to(g, a.values.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        a.accumulate_grad(np.broadcast_to(g, a.values.shape).copy())

    return _make(out_values, (a,), backward)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.values.size
    elif isinstance(axis, tuple):
        count = int(np.prod([a.values.shape[ax] for ax in axis]))
    else:
        count = a.values.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ContractError("concat of an empty sequence")
    out_values = np.concatenate([p.values for p in parts], axis=axis)
    sizes = [p.values.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g: Array) -> None:
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            p.accumulate_grad(g[tuple(idx)])

    return _make(out_values, tuple(parts), backward)


def select_columns(a, idx) -> Tensor:
    """Gather unique columns of a matrix; backward scatters into zeros."""
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeMismatchError(f"select_columns expects a matrix, got {a.shape}")
    idx = np.asarray(idx, dtype=np.intp)
    if len(np.unique(idx)) != idx.size:
        raise ContractError("select_columns requires unique column indices")
    out_values = a.values[:, idx].copy()

    def backward(g: Array) -> None:
        full = np.zeros_like(a.values)
        full[:, idx] = g
        a.accumulate_grad(full)

    return _make(out_values, (a,), backward)


def softmax(a, axis: int = -1) -> Tensor:
    """Row-stable softmax; the max shift is gradient-transparent by shift invariance."""
    a = as_tensor(a)
    shifted = a.values - a.values.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_values = e / e.sum(axis=axis, keepdims=True)

    def backward(g: Array) -> None:
        dot = (g * out_values).sum(axis=axis, keepdims=True)
        a.accumulate_grad(out_values * (g - dot))

    return _make(out_values, (a,), backward)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.values - a.values.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_values = shifted - lse
    soft = np.exp(out_values)

    def backward(g: Array) -> None:
        a.accumulate_grad(g - soft * g.sum(axis=axis, keepdims=True))

    return _make(out_values, (a,), backward)


def l2_normalize(a, axis: int = -1) -> Tensor:
    """Divide by the L2 norm along `axis`; zero-norm slices are an error."""
    a = as_tensor(a)
    norms = np.sqrt((a.values * a.values).sum(axis=axis, keepdims=True))
    zero = norms == 0.0
    if np.any(zero):
        rows = np.argwhere(zero.squeeze(axis)) if a.ndim > 1 else [()]
        first = rows[0] if len(rows) else "?"
        raise ZeroNormError(f"zero-norm slice at index {tuple(np.ravel(first))} in l2_normalize")
    out_values = a.values / norms

    def backward(g: Array) -> None:
        dot = (g * out_values).sum(axis=axis, keepdims=True)
        a.accumulate_grad((g - out_values * dot) / norms)

    return _make(out_values, (a,), backward)


def _im2col(xp: Array, k: int, stride: int, oh: int, ow: int) -> Array:
    """(n,c,H,W) padded input -> (n*oh*ow, c*k*k) patch matrix."""
    n, c = xp.shape[0], xp.shape[1]
    s0, s1, s2, s3 = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, oh, ow, c, k, k),
        strides=(s0, s2 * stride, s3 * stride, s1, s2, s3),
        writeable=False,
    )
    return np.ascontiguousarray(windows).reshape(n * oh * ow, c * k * k)


def conv2d(x, w, b, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D cross-correlation with bias: x (n,c,h,w), w (oc,c,k,k), b (oc,)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeMismatchError(f"conv2d expects 4-D x and w, got {x.shape}, {w.shape}")
    n, c, h, wd = x.shape
    oc, ic, k, k2 = w.shape
    if k != k2:
        raise ShapeMismatchError(f"conv2d kernel must be square, got {w.shape}")
    if ic != c:
        raise ShapeMismatchError(f"conv2d channel mismatch: input has {c}, kernel expects {ic}")
    if b.shape != (oc,):
        raise ShapeMismatchError(f"conv2d bias shape {b.shape} != ({oc},)")
    oh = (h + 2 * pad - k) // stride + 1
    ow = (wd + 2 * pad - k) // stride + 1
    if oh < 1 or ow < 1:
        raise ShapeMismatchError(f"conv2d output would be empty for input {x.shape}, k={k}")

    xp = np.pad(x.values, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.values
    cols = _im2col(xp, k, stride, oh, ow)
    wmat = w.values.reshape(oc, c * k * k)
    out_flat = cols @ wmat.T + b.values
    out_values = _check_finite(
        out_flat.reshape(n, oh, ow, oc).transpose(0, 3, 1, 2).copy(), "conv2d"
    )

    def backward(g: Array) -> None:
        gmat = g.transpose(0, 2, 3, 1).reshape(n * oh * ow, oc)
        w.accumulate_grad((gmat.T @ cols).reshape(oc, c, k, k))
        b.accumulate_grad(gmat.sum(axis=0))
        dcols = (gmat @ wmat).reshape(n, oh, ow, c, k, k)
        dxp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad))
        for i in range(k):
            for j in range(k):
                dxp[:, :, i : i + oh * stride : stride, j : j + ow * stride : stride] += (
                    dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                )
        x.accumulate_grad(dxp[:, :, pad : pad + h, pad : pad + wd] if pad else dxp)

    return _make(out_values, (x, w, b), backward)


def avgpool2(x) -> Tensor:
    """2x2 mean pooling with stride 2; spatial dims must be even."""
    x = as_tensor(x)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeMismatchError(f"avgpool2 needs even spatial dims, got {h}x{w}")
    out_values = x.values.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def backward(g: Array) -> None:
        up = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * 0.25
        x.accumulate_grad(up)

    return _make(out_values, (x,), backward)


def backward(loss: Tensor) -> None:
    """Reverse pass from a scalar loss; accumulates into `.grad` of every
    tensor reachable through the recorded graph."""
    if not isinstance(loss, Tensor):
        raise ContractError("backward expects a Tensor")
    if loss.values.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))

    loss.grad = np.ones_like(loss.values)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def gradients(loss: Tensor, params: Sequence[Tensor]) -> list[Array]:
    """Run backward and return per-parameter gradients; parameters the loss
    does not depend on get zeros."""
    for p in params:
        p.zero_grad()
    backward(loss)
    return [p.grad if p.grad is not None else np.zeros_like(p.values) for p in params]
