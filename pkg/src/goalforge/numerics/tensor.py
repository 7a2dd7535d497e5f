"""Reverse-mode autodiff over dense float64 numpy arrays.

The op vocabulary is deliberately small and fixed: affine, 2D convolution,
ReLU, softplus, tanh, sigmoid, elementwise arithmetic (with broadcasting),
reductions, structural ops (reshape/concat/slice/nearest-upsample), Gaussian
reparameterization and stop-gradient. Every op here is covered by the
finite-difference suite in tests; adding an op means adding it there too.

Graphs are built define-by-run: each Tensor keeps its parents and a
vector-Jacobian closure, and backward() walks the tape in reverse
topological order.
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericError, ShapeError

_CHECKED = False


def set_checked(flag: bool) -> None:
    """Globally toggle finiteness validation at Tensor construction."""
    global _CHECKED
    _CHECKED = bool(flag)


def checked() -> bool:
    return _CHECKED


class Tensor:
    """Node in the autodiff tape wrapping a float64 ndarray."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp", "op")

    def __init__(self, data, requires_grad=False, _parents=(), _vjp=None, op="leaf"):
        arr = np.asarray(data, dtype=np.float64)
        if _CHECKED and not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite value produced by '{op}'")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._vjp = _vjp
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return self.data.item()

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, op="detach")

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            # copy: vjps may hand the same array to several parents
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into .grad for every reachable node.

        self must be scalar; its seed gradient is 1.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward() requires a scalar, got shape {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._vjp is None or node.grad is None:
                continue
            parent_grads = node._vjp(node.grad)
            for parent, g in zip(node._parents, parent_grads):
                if parent.requires_grad and g is not None:
                    parent._accumulate(g)

    # -- operator sugar ----------------------------------------------------
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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, k):
        return pow_const(self, k)

    def __getitem__(self, idx):
        return take(self, idx)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"


def astensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    return Tensor(np.asarray(x, dtype=np.float64), op="const")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum g down to `shape` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _binary(a, b, fwd, dva, dvb, op: str) -> Tensor:
    a, b = astensor(a), astensor(b)
    try:
        out = fwd(a.data, b.data)
    except ValueError as e:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from e

    def vjp(g):
        return (
            _unbroadcast(dva(g, a.data, b.data), a.data.shape),
            _unbroadcast(dvb(g, a.data, b.data), b.data.shape),
        )

    return Tensor(out, _parents=(a, b), _vjp=vjp, op=op)


def add(a, b):
    return _binary(a, b, lambda x, y: x + y, lambda g, x, y: g, lambda g, x, y: g, "add")


def sub(a, b):
    return _binary(a, b, lambda x, y: x - y, lambda g, x, y: g, lambda g, x, y: -g, "sub")


def mul(a, b):
    return _binary(a, b, lambda x, y: x * y, lambda g, x, y: g * y, lambda g, x, y: g * x, "mul")


def div(a, b):
    return _binary(
        a, b, lambda x, y: x / y,
        lambda g, x, y: g / y,
        lambda g, x, y: -g * x / (y * y),
        "div",
    )


def pow_const(a, k: float) -> Tensor:
    a = astensor(a)
    k = float(k)
    out = a.data ** k

    def vjp(g):
        return (g * k * a.data ** (k - 1.0),)

    return Tensor(out, _parents=(a,), _vjp=vjp, op="pow")


def square(a) -> Tensor:
    a = astensor(a)

    def vjp(g):
        return (g * 2.0 * a.data,)

    return Tensor(a.data * a.data, _parents=(a,), _vjp=vjp, op="square")


def exp(a) -> Tensor:
    a = astensor(a)
    out = np.exp(a.data)

    def vjp(g):
        return (g * out,)

    return Tensor(out, _parents=(a,), _vjp=vjp, op="exp")


def log(a) -> Tensor:
    a = astensor(a)

    def vjp(g):
        return (g / a.data,)

    return Tensor(np.log(a.data), _parents=(a,), _vjp=vjp, op="log")


def sqrt(a, eps: float = 0.0) -> Tensor:
    """Square root; pass eps > 0 to keep the gradient finite at zero."""
    a = astensor(a)
    out = np.sqrt(a.data + eps)

    def vjp(g):
        return (g * 0.5 / out,)

    return Tensor(out, _parents=(a,), _vjp=vjp, op="sqrt")


def tanh(a) -> Tensor:
    a = astensor(a)
    out = np.tanh(a.data)

    def vjp(g):
        return (g * (1.0 - out * out),)

    return Tensor(out, _parents=(a,), _vjp=vjp, op="tanh")


def sigmoid(a) -> Tensor:
    a = astensor(a)
    out = 1.0 / (1.0 + np.exp(-a.data))

    def vjp(g):
        return (g * out * (1.0 - out),)

    return Tensor(out, _parents=(a,), _vjp=vjp, op="sigmoid")


def relu(a) -> Tensor:
    a = astensor(a)
    mask = a.data > 0.0

    def vjp(g):
        return (g * mask,)

    return Tensor(a.data * mask, _parents=(a,), _vjp=vjp, op="relu")


def softplus(a) -> Tensor:
    a = astensor(a)
    # log(1+e^x) computed stably for large |x|
    out = np.logaddexp(0.0, a.data)
    sig = 1.0 / (1.0 + np.exp(-a.data))

    def vjp(g):
        return (g * sig,)

    return Tensor(out, _parents=(a,), _vjp=vjp, op="softplus")


def clamp(a, lo: float, hi: float) -> Tensor:
    """Clip to [lo, hi]; gradient is identity inside the range, zero outside."""
    a = astensor(a)
    mask = (a.data >= lo) & (a.data <= hi)

    def vjp(g):
        return (g * mask,)

    return Tensor(np.clip(a.data, lo, hi), _parents=(a,), _vjp=vjp, op="clamp")


def stop_gradient(a) -> Tensor:
    """Identity forward, zero backward."""
    a = astensor(a)

    def vjp(g):
        return (None,)

    return Tensor(a.data, _parents=(a,), _vjp=vjp, op="stop_gradient")


def sum_(a, axis=None, keepdims=False) -> Tensor:
    a = astensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.data.shape).copy(),)

    return Tensor(out, _parents=(a,), _vjp=vjp, op="sum")


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = astensor(a)
    if axis is None:
        n = a.data.size
    elif isinstance(axis, tuple):
        n = int(np.prod([a.data.shape[i] for i in axis]))
    else:
        n = a.data.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / n)


def matmul(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul: expected 2D operands, got {a.shape} @ {b.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def vjp(g):
        return (g @ b.data.T, a.data.T @ g)

    return Tensor(out, _parents=(a, b), _vjp=vjp, op="matmul")


def affine(x, w, b) -> Tensor:
    """y = x @ w + b for batched rows x:(B,I), w:(I,O), b:(O,)."""
    x, w, b = astensor(x), astensor(w), astensor(b)
    if x.data.ndim != 2:
        raise ShapeError(f"affine: input must be (B, I), got {x.shape}")
    if w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(f"affine: weight {w.shape} incompatible with input {x.shape}")
    if b.data.shape != (w.data.shape[1],):
        raise ShapeError(f"affine: bias {b.shape} incompatible with weight {w.shape}")
    out = x.data @ w.data + b.data

    def vjp(g):
        return (g @ w.data.T if x.requires_grad else None,
                x.data.T @ g if w.requires_grad else None,
                g.sum(axis=0) if b.requires_grad else None)

    return Tensor(out, _parents=(x, w, b), _vjp=vjp, op="affine")


def reshape(a, shape) -> Tensor:
    a = astensor(a)
    out = a.data.reshape(shape)

    def vjp(g):
        return (g.reshape(a.data.shape),)

    return Tensor(out, _parents=(a,), _vjp=vjp, op="reshape")


def take(a, idx) -> Tensor:
    """Basic slicing/indexing with gradient scatter-add."""
    a = astensor(a)
    out = a.data[idx]

    def vjp(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return Tensor(out, _parents=(a,), _vjp=vjp, op="take")


def concat(parts, axis: int = -1) -> Tensor:
    parts = [astensor(p) for p in parts]
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor(out, _parents=tuple(parts), _vjp=vjp, op="concat")


def upsample_nearest(a, factor: int) -> Tensor:
    """Nearest-neighbour upsampling of (B, C, H, W) by an integer factor."""
    a = astensor(a)
    if a.data.ndim != 4:
        raise ShapeError(f"upsample_nearest: expected (B,C,H,W), got {a.shape}")
    f = int(factor)
    out = a.data.repeat(f, axis=2).repeat(f, axis=3)

    def vjp(g):
        B, C, H, W = a.data.shape
        return (g.reshape(B, C, H, f, W, f).sum(axis=(3, 5)),)

    return Tensor(out, _parents=(a,), _vjp=vjp, op="upsample_nearest")


# -- 2D convolution ---------------------------------------------------------

def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    B, C, H, W = x.shape
    Ho = (H + 2 * pad - kh) // stride + 1
    Wo = (W + 2 * pad - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    s = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp,
        shape=(B, C, Ho, Wo, kh, kw),
        strides=(s[0], s[1], s[2] * stride, s[3] * stride, s[2], s[3]),
        writeable=False,
    )
    # (B, Ho, Wo, C*kh*kw)
    return windows.transpose(0, 2, 3, 1, 4, 5).reshape(B, Ho, Wo, C * kh * kw), Ho, Wo


def _col2im(cols: np.ndarray, xshape, kh, kw, stride, pad):
    B, C, H, W = xshape
    Ho = (H + 2 * pad - kh) // stride + 1
    Wo = (W + 2 * pad - kw) // stride + 1
    xp = np.zeros((B, C, H + 2 * pad, W + 2 * pad))
    # one contiguous rearrangement up front so the loop adds contiguous views
    cols6 = np.ascontiguousarray(
        cols.reshape(B, Ho, Wo, C, kh, kw).transpose(0, 3, 4, 5, 1, 2))
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += cols6[:, :, i, j]
    return xp[:, :, pad:pad + H, pad:pad + W] if pad else xp


def conv2d(x, w, b, stride: int = 1, pad: int = 0) -> Tensor:
    """2D convolution, x:(B,C,H,W), w:(O,C,kh,kw), b:(O,)."""
    x, w, b = astensor(x), astensor(w), astensor(b)
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d: expected 4D input/weight, got {x.shape}, {w.shape}")
    if x.data.shape[1] != w.data.shape[1]:
        raise ShapeError(f"conv2d: channel mismatch, input {x.shape} vs weight {w.shape}")
    if b.data.shape != (w.data.shape[0],):
        raise ShapeError(f"conv2d: bias {b.shape} incompatible with weight {w.shape}")
    B = x.data.shape[0]
    O, C, kh, kw = w.data.shape
    cols, Ho, Wo = _im2col(x.data, kh, kw, stride, pad)
    cols2 = cols.reshape(B * Ho * Wo, C * kh * kw)
    wmat = w.data.reshape(O, -1).T
    out = (cols2 @ wmat + b.data).reshape(B, Ho, Wo, O).transpose(0, 3, 1, 2)

    def vjp(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(B * Ho * Wo, O)
        dw = (cols2.T @ gmat).T.reshape(O, C, kh, kw)
        db = gmat.sum(axis=0)
        dx = None
        if x.requires_grad:
            dcols = gmat @ wmat.T
            dx = _col2im(dcols.reshape(B, Ho, Wo, C * kh * kw), x.data.shape, kh, kw, stride, pad)
        return (dx, dw, db)

    return Tensor(out, _parents=(x, w, b), _vjp=vjp, op="conv2d")
