"""Minimal dense-tensor library with reverse-mode autodiff.

Everything is float64 and CPU-only: correctness (tight gradient checks)
matters more than speed at this scale. A Tensor wraps a numpy array plus
a closure that knows how to push gradients to its parents.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np


class ShapeMismatchError(ValueError):
    """Raised when operand shapes are incompatible."""


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False,
                 _parents: tuple = (), _backward: Optional[Callable] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents = _parents
        self._backward = _backward

    # ---- bookkeeping ----

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Accumulate d(self)/d(param) into .grad of every reachable tensor.

        Repeated calls accumulate; callers reset with zero_grad between steps.
        """
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar, got shape {self.data.shape}")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        flowing = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = flowing.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not _needs(parent):
                    continue
                if id(parent) in flowing:
                    flowing[id(parent)] = flowing[id(parent)] + pg
                else:
                    flowing[id(parent)] = pg

    # ---- arithmetic ----

    def __add__(self, other):
        other = _wrap(other)
        out_data = self.data + other.data
        return _node(out_data, (self, other), lambda g: (
            _unbroadcast(g, self.data.shape), _unbroadcast(g, other.data.shape)))

    __radd__ = __add__

    def __neg__(self):
        return _node(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        return self + (-_wrap(other))

    def __rsub__(self, other):
        return _wrap(other) + (-self)

    def __mul__(self, other):
        other = _wrap(other)
        return _node(self.data * other.data, (self, other), lambda g: (
            _unbroadcast(g * other.data, self.data.shape),
            _unbroadcast(g * self.data, other.data.shape)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _wrap(other)
        return _node(self.data / other.data, (self, other), lambda g: (
            _unbroadcast(g / other.data, self.data.shape),
            _unbroadcast(-g * self.data / other.data ** 2, other.data.shape)))

    def __pow__(self, exponent: float):
        out_data = self.data ** exponent
        return _node(out_data, (self,),
                     lambda g: (g * exponent * self.data ** (exponent - 1),))

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    # ---- shape ops ----

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        return _node(self.data.reshape(shape), (self,), lambda g: (g.reshape(old),))

    def transpose(self, *axes):
        if not axes:
            axes = tuple(reversed(range(self.data.ndim)))
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inverse = tuple(np.argsort(axes))
        return _node(self.data.transpose(axes), (self,),
                     lambda g: (g.transpose(inverse),))

    @property
    def T(self):
        return self.transpose()

    def __getitem__(self, idx):
        out_data = self.data[idx]

        def bwd(g):
            buf = np.zeros_like(self.data)
            np.add.at(buf, idx, g)
            return (buf,)

        return _node(out_data, (self,), bwd)

    # ---- reductions ----

    def sum(self, axis=None, keepdims: bool = False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def bwd(g):
            if axis is None:
                return (np.broadcast_to(g, self.data.shape).copy(),)
            g2 = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(g2, self.data.shape).copy(),)

        return _node(out_data, (self,), bwd)

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # ---- pointwise ----

    def exp(self):
        out_data = np.exp(self.data)
        return _node(out_data, (self,), lambda g: (g * out_data,))

    def log(self):
        return _node(np.log(self.data), (self,), lambda g: (g / self.data,))

    def tanh(self):
        out_data = np.tanh(self.data)
        return _node(out_data, (self,), lambda g: (g * (1.0 - out_data ** 2),))


def _needs(t: Tensor) -> bool:
    return t.requires_grad or t._parents


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward) -> Tensor:
    if any(_needs(p) for p in parents):
        return Tensor(data, _parents=parents, _backward=backward)
    return Tensor(data)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        return tuple(np.take(g, range(offsets[i], offsets[i + 1]), axis=axis)
                     for i in range(len(tensors)))

    return _node(out_data, tuple(tensors), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatchError(
            f"matmul: incompatible shapes {a.data.shape} x {b.data.shape}")
    return _node(a.data @ b.data, (a, b),
                 lambda g: (g @ b.data.T, a.data.T @ g))


def relu(x: Tensor) -> Tensor:
    x = _wrap(x)
    mask = x.data > 0
    return _node(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    """1/(1+e^-x), computed branch-wise so large |x| never overflows."""
    x = _wrap(x)
    out_data = np.empty_like(x.data)
    pos = x.data >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    out_data[~pos] = ex / (1.0 + ex)
    return _node(out_data, (x,), lambda g: (g * out_data * (1.0 - out_data),))


_GELU_C = np.sqrt(2.0 / np.pi)
_GELU_A = 0.044715


def gelu(x: Tensor) -> Tensor:
    """tanh-approximation GELU."""
    x = _wrap(x)
    u = _GELU_C * (x.data + _GELU_A * x.data ** 3)
    t = np.tanh(u)
    out_data = 0.5 * x.data * (1.0 + t)

    def bwd(g):
        du = _GELU_C * (1.0 + 3.0 * _GELU_A * x.data ** 2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t ** 2) * du),)

    return _node(out_data, (x,), bwd)


ACTIVATIONS = {"relu": relu, "gelu": gelu, "sigmoid": sigmoid, "identity": lambda t: t}


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = _wrap(x)
    if not -x.data.ndim <= axis < x.data.ndim:
        raise ValueError(f"softmax axis {axis} out of bounds for shape {x.data.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        inner = (g * out_data).sum(axis=axis, keepdims=True)
        return (out_data * (g - inner),)

    return _node(out_data, (x,), bwd)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x, gain, bias = _wrap(x), _wrap(gain), _wrap(bias)
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    normed = centered * ((var + eps) ** -0.5)
    return normed * gain + bias


def scaled_dot_product_attention(q: Tensor, k: Tensor, v: Tensor,
                                 mask: Optional[np.ndarray] = None) -> Tensor:
    """softmax(q kᵀ / √d_k) v over 2-D operands (seq_len × dim).

    mask[i, j] False forbids query i from attending to key j. A fully
    masked query row is an error rather than a NaN.
    """
    q, k, v = _wrap(q), _wrap(k), _wrap(v)
    if q.data.shape[1] != k.data.shape[1]:
        raise ShapeMismatchError(
            f"attention: q dim {q.data.shape} incompatible with k {k.data.shape}")
    if k.data.shape[0] != v.data.shape[0]:
        raise ShapeMismatchError(
            f"attention: k rows {k.data.shape} != v rows {v.data.shape}")
    d_k = q.data.shape[1]
    scores = matmul(q, k.T) * (1.0 / np.sqrt(d_k))
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != scores.data.shape:
            raise ShapeMismatchError(
                f"attention mask {mask.shape} != score shape {scores.data.shape}")
        if not mask.any(axis=1).all():
            raise ValueError("attention: a query row has every position masked")
        scores = scores + Tensor(np.where(mask, 0.0, -1e30))
    weights = softmax(scores, axis=-1)
    return matmul(weights, v)


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor,
           activation: Optional[str] = None) -> Tensor:
    """Valid (no padding) stride-1 convolution.

    x: (C_in, H, W); kernels: (C_out, C_in, r, r); bias: (C_out,).
    """
    x, kernels, bias = _wrap(x), _wrap(kernels), _wrap(bias)
    c_in, h, w = x.data.shape
    c_out, kc_in, r, r2 = kernels.data.shape
    if kc_in != c_in:
        raise ShapeMismatchError(f"conv2d: input channels {c_in} != kernel channels {kc_in}")
    if r > h or r2 > w:
        raise ShapeMismatchError(
            f"conv2d: kernel {r}x{r2} larger than input {h}x{w}")
    h_out, w_out = h - r + 1, w - r2 + 1
    # im2col: (h_out*w_out, c_in*r*r2)
    windows = np.lib.stride_tricks.sliding_window_view(x.data, (r, r2), axis=(1, 2))
    cols = windows.transpose(1, 2, 0, 3, 4).reshape(h_out * w_out, c_in * r * r2)
    kmat = kernels.data.reshape(c_out, c_in * r * r2)
    out_data = (cols @ kmat.T + bias.data).T.reshape(c_out, h_out, w_out)

    def bwd(g):
        gmat = g.reshape(c_out, h_out * w_out)  # (c_out, P)
        gk = (gmat @ cols).reshape(kernels.data.shape)
        gb = gmat.sum(axis=1)
        gcols = gmat.T @ kmat  # (P, c_in*r*r2)
        gx = np.zeros_like(x.data)
        gcols = gcols.reshape(h_out, w_out, c_in, r, r2)
        for di in range(r):
            for dj in range(r2):
                gx[:, di:di + h_out, dj:dj + w_out] += gcols[:, :, :, di, dj].transpose(2, 0, 1)
        return (gx, gk, gb)

    out = _node(out_data, (x, kernels, bias), bwd)
    if activation is not None:
        out = ACTIVATIONS[activation](out)
    return out


def maxpool2d(x: Tensor, pool_h: int, pool_w: int) -> Tensor:
    """Non-overlapping max pooling; trailing remainder rows/cols are dropped."""
    x = _wrap(x)
    if pool_h < 1 or pool_w < 1:
        raise ValueError(f"maxpool2d: pool sizes must be >= 1, got {pool_h}x{pool_w}")
    c, h, w = x.data.shape
    h_out, w_out = h // pool_h, w // pool_w
    trimmed = x.data[:, :h_out * pool_h, :w_out * pool_w]
    blocks = trimmed.reshape(c, h_out, pool_h, w_out, pool_w)
    out_data = blocks.max(axis=(2, 4))

    def bwd(g):
        winners = blocks == out_data[:, :, None, :, None]
        # split ties evenly so the gradient check stays exact
        counts = winners.sum(axis=(2, 4), keepdims=True)
        gx = np.zeros_like(x.data)
        spread = winners * (g[:, :, None, :, None] / counts)
        gx[:, :h_out * pool_h, :w_out * pool_w] = spread.reshape(
            c, h_out * pool_h, w_out * pool_w)
        return (gx,)

    return _node(out_data, (x,), bwd)


def bce_with_logits(logits: Tensor, labels, reduction: str = "sum") -> Tensor:
    """Binary cross-entropy from pre-sigmoid logits (log-sum-exp stable form)."""
    logits = _wrap(logits)
    y = np.asarray(labels, dtype=np.float64)
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("bce: labels must be 0 or 1")
    x = logits.data
    per = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
    n = per.size
    if reduction == "sum":
        out_data, scale = per.sum(), 1.0
    elif reduction == "mean":
        out_data, scale = per.mean(), 1.0 / n
    else:
        raise ValueError(f"bce: unknown reduction {reduction!r}")
    p = sigmoid(Tensor(x)).data
    return _node(np.asarray(out_data), (logits,), lambda g: (g * scale * (p - y),))


def bce_loss(p: Tensor, labels, reduction: str = "sum", eps: float = 1e-12) -> Tensor:
    """Binary cross-entropy on probabilities, clamped away from 0/1."""
    p = _wrap(p)
    y = np.asarray(labels, dtype=np.float64)
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("bce: labels must be 0 or 1")
    pc = np.clip(p.data, eps, 1.0 - eps)
    per = -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))
    n = per.size
    if reduction == "sum":
        out_data, scale = per.sum(), 1.0
    elif reduction == "mean":
        out_data, scale = per.mean(), 1.0 / n
    else:
        raise ValueError(f"bce: unknown reduction {reduction!r}")
    return _node(np.asarray(out_data), (p,),
                 lambda g: (g * scale * (-(y / pc) + (1.0 - y) / (1.0 - pc)),))


def cross_entropy(logits: Tensor, targets, ignore_index: Optional[int] = None) -> Tensor:
    """Mean negative log-softmax probability of target ids.

    logits: (T, V); targets: length-T int sequence. Positions equal to
    ignore_index are excluded from the mean.
    """
    logits = _wrap(logits)
    t = np.asarray(targets, dtype=np.int64)
    v = logits.data.shape[1]
    if t.ndim != 1 or t.shape[0] != logits.data.shape[0]:
        raise ShapeMismatchError(
            f"cross_entropy: targets shape {t.shape} vs logits {logits.data.shape}")
    keep = np.ones_like(t, dtype=bool) if ignore_index is None else t != ignore_index
    checked = t[keep]
    if ((checked < 0) | (checked >= v)).any():
        bad = checked[(checked < 0) | (checked >= v)][0]
        raise ValueError(f"cross_entropy: target id {bad} outside vocabulary of size {v}")
    n = int(keep.sum())
    if n == 0:
        raise ValueError("cross_entropy: all positions ignored")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    t_safe = np.where(keep, t, 0)
    out_data = -(logp[np.arange(t.shape[0]), t_safe] * keep).sum() / n

    def bwd(g):
        soft = np.exp(logp)
        onehot = np.zeros_like(soft)
        onehot[np.arange(t.shape[0]), t_safe] = 1.0
        return (g * (soft - onehot) * keep[:, None] / n,)

    return _node(np.asarray(out_data), (logits,), bwd)
