"""Dense tensors with reverse-mode automatic differentiation.

This is a deliberately small engine: it implements exactly the operation set
the sliding-window transformer needs (convolutions, normalizations, affine
maps, windowed attention plumbing, pooling, the loss primitives) and nothing
else.  Values are float64 numpy arrays; each differentiable operation records
a backward closure on its output, and ``Tensor.backward`` replays the graph
in reverse topological order.

Gradients accumulate additively into ``.grad`` of every tensor created with
``requires_grad=True``.  Reductions use numpy's fixed-order summation, so a
fixed graph yields bit-identical forward values and gradients.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .errors import DimensionError, NumericError

DTYPE = np.float64

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)

# single-threaded switch consulted at node creation time
_GRAD_ENABLED = [True]


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference-only forwards).

    Operations still compute values, but outputs do not require gradients,
    keep no parent links, and attach no backward closures, so intermediate
    arrays are freed as soon as they go out of scope.
    """
    _GRAD_ENABLED.append(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.pop()


def _as_array(value) -> np.ndarray:
    return np.asarray(value, dtype=DTYPE)


class Tensor:
    """A dense float64 array participating in a reverse-mode graph.

    ``requires_grad=True`` marks a leaf whose gradient should be populated by
    ``backward``; tensors produced by operations inherit the flag from their
    parents.  ``grad`` is allocated lazily and always matches ``data.shape``.
    """

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def lift(value) -> "Tensor":
        return value if isinstance(value, Tensor) else Tensor(value)

    @staticmethod
    def _node(data, parents: tuple["Tensor", ...]) -> "Tensor":
        track = _GRAD_ENABLED[-1] and any(p.requires_grad for p in parents)
        out = Tensor(data, requires_grad=track)
        if out.requires_grad:
            out._parents = parents
        return out

    # -- basic metadata --------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- gradient plumbing ------------------------------------------------------

    def _accum(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Populate gradients of every reachable ``requires_grad`` tensor.

        Only scalar roots are accepted; the traversal visits each node once.
        """
        if self.data.ndim != 0 and self.data.size != 1:
            raise DimensionError(
                f"backward requires a scalar loss, got shape {self.shape}"
            )
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self._accum(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()
                # The node's gradient and closure are fully consumed now.
                # Dropping them caps peak memory and breaks the reference
                # cycle node -> closure -> node, so graphs are reclaimed by
                # reference counting instead of waiting for the cyclic GC.
                # Consequence: a graph supports exactly one backward pass.
                node.grad = None
                node._backward = None
                node._parents = ()

    # -- operators ---------------------------------------------------------------

    def __add__(self, other):
        return add(self, Tensor.lift(other))

    def __radd__(self, other):
        return add(Tensor.lift(other), self)

    def __sub__(self, other):
        return add(self, neg(Tensor.lift(other)))

    def __rsub__(self, other):
        return add(Tensor.lift(other), neg(self))

    def __mul__(self, other):
        return mul(self, Tensor.lift(other))

    def __rmul__(self, other):
        return mul(Tensor.lift(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, Tensor.lift(other))

    # -- method aliases ------------------------------------------------------------

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, axes):
        return transpose(self, axes)

    def sum(self):
        return sum_all(self)

    def mean(self):
        return mean_all(self)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (the inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor._node(a.data + b.data, (a, b))
    if out.requires_grad:
        def _backward():
            if a.requires_grad:
                a._accum(_unbroadcast(out.grad, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(out.grad, b.shape))
        out._backward = _backward
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor._node(a.data * b.data, (a, b))
    if out.requires_grad:
        def _backward():
            if a.requires_grad:
                a._accum(_unbroadcast(out.grad * b.data, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(out.grad * a.data, b.shape))
        out._backward = _backward
    return out


def neg(a: Tensor) -> Tensor:
    out = Tensor._node(-a.data, (a,))
    if out.requires_grad:
        def _backward():
            a._accum(-out.grad)
        out._backward = _backward
    return out


def scale(a: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    out = Tensor._node(a.data * factor, (a,))
    if out.requires_grad:
        def _backward():
            a._accum(out.grad * factor)
        out._backward = _backward
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product; leading batch dimensions must match exactly."""
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError("matmul operands must have ndim >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(
            f"matmul inner axes disagree: {a.shape[-1]} vs {b.shape[-2]}"
        )
    if a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(
            f"matmul batch axes disagree: {a.shape[:-2]} vs {b.shape[:-2]}"
        )
    out = Tensor._node(a.data @ b.data, (a, b))
    if out.requires_grad:
        def _backward():
            if a.requires_grad:
                a._accum(out.grad @ b.data.swapaxes(-1, -2))
            if b.requires_grad:
                b._accum(a.data.swapaxes(-1, -2) @ out.grad)
        out._backward = _backward
    return out


# ---------------------------------------------------------------------------
# shape manipulation
# ---------------------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor._node(a.data.reshape(shape), (a,))
    if out.requires_grad:
        def _backward():
            a._accum(out.grad.reshape(a.shape))
        out._backward = _backward
    return out


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = Tensor._node(a.data.transpose(axes), (a,))
    if out.requires_grad:
        def _backward():
            a._accum(out.grad.transpose(inverse))
        out._backward = _backward
    return out


def roll(a: Tensor, shift: int, axis: int) -> Tensor:
    """Cyclic shift along one axis (differentiable; used by shifted windows)."""
    out = Tensor._node(np.roll(a.data, shift, axis=axis), (a,))
    if out.requires_grad:
        def _backward():
            a._accum(np.roll(out.grad, -shift, axis=axis))
        out._backward = _backward
    return out


# ---------------------------------------------------------------------------
# network layers
# ---------------------------------------------------------------------------


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map along the last axis: ``x @ weight + bias``."""
    if weight.ndim != 2:
        raise DimensionError(f"linear weight must be 2-D, got {weight.shape}")
    if x.shape[-1] != weight.shape[0]:
        raise DimensionError(
            f"linear input axis -1 has size {x.shape[-1]}, "
            f"weight expects {weight.shape[0]}"
        )
    if bias.shape != (weight.shape[1],):
        raise DimensionError(
            f"linear bias shape {bias.shape} does not match output width "
            f"{weight.shape[1]}"
        )
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, x.shape[-1])
    out = Tensor._node(
        (x2 @ weight.data + bias.data).reshape(*lead, weight.shape[1]), (x, weight, bias)
    )
    if out.requires_grad:
        def _backward():
            g2 = out.grad.reshape(-1, weight.shape[1])
            if x.requires_grad:
                x._accum((g2 @ weight.data.T).reshape(x.shape))
            if weight.requires_grad:
                weight._accum(x2.T @ g2)
            if bias.requires_grad:
                bias._accum(g2.sum(axis=0))
        out._backward = _backward
    return out


def conv2d_valid(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Valid (no padding) cross-correlation with bias.

    ``x`` is [B, Cin, H, W], ``kernel`` is [Cout, Cin, kH, kW]; the output is
    [B, Cout, H-kH+1, W-kW+1].  Implemented as an im2col matrix product.
    """
    if x.ndim != 4:
        raise DimensionError(f"conv input must be 4-D [B,Cin,H,W], got {x.shape}")
    if kernel.ndim != 4:
        raise DimensionError(
            f"conv kernel must be 4-D [Cout,Cin,kH,kW], got {kernel.shape}"
        )
    batch, cin, height, width = x.shape
    cout, kcin, kh, kw = kernel.shape
    if kcin != cin:
        raise DimensionError(
            f"conv channel axis mismatch: input has {cin}, kernel expects {kcin}"
        )
    if kh > height:
        raise DimensionError(f"kernel height {kh} exceeds input height {height}")
    if kw > width:
        raise DimensionError(f"kernel width {kw} exceeds input width {width}")
    if bias.shape != (cout,):
        raise DimensionError(
            f"conv bias shape {bias.shape} does not match {cout} output channels"
        )
    oh, ow = height - kh + 1, width - kw + 1
    # patches: [B, Cin, oh, ow, kh, kw] -> rows [B*oh*ow, Cin*kh*kw]
    patches = np.lib.stride_tricks.sliding_window_view(x.data, (kh, kw), axis=(2, 3))
    cols = patches.transpose(0, 2, 3, 1, 4, 5).reshape(batch * oh * ow, cin * kh * kw)
    kmat = kernel.data.reshape(cout, cin * kh * kw).T
    result = (cols @ kmat + bias.data).reshape(batch, oh, ow, cout)
    out = Tensor._node(result.transpose(0, 3, 1, 2), (x, kernel, bias))
    if out.requires_grad:
        def _backward():
            g = out.grad  # [B, Cout, oh, ow]
            g_rows = g.transpose(0, 2, 3, 1).reshape(batch * oh * ow, cout)
            if kernel.requires_grad:
                kernel._accum((cols.T @ g_rows).T.reshape(kernel.shape))
            if bias.requires_grad:
                bias._accum(g_rows.sum(axis=0))
            if x.requires_grad:
                dx = np.zeros_like(x.data)
                # scatter one kernel offset at a time; kh*kw slice-adds total
                for i in range(kh):
                    for j in range(kw):
                        contrib = np.tensordot(g, kernel.data[:, :, i, j], axes=([1], [0]))
                        dx[:, :, i:i + oh, j:j + ow] += contrib.transpose(0, 3, 1, 2)
                x._accum(dx)
        out._backward = _backward
    return out


@dataclass
class BatchNormState:
    """Running statistics for inference-mode batch normalization."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @staticmethod
    def create(n_channels: int, momentum: float = 0.1, eps: float = 1e-5) -> "BatchNormState":
        return BatchNormState(
            running_mean=np.zeros(n_channels, dtype=DTYPE),
            running_var=np.ones(n_channels, dtype=DTYPE),
            momentum=momentum,
            eps=eps,
        )


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState,
               mode: str = "train") -> Tensor:
    """Per-channel batch normalization over (batch, height, width).

    Train mode normalizes by the batch statistics and updates the running
    estimates; eval mode uses the stored running statistics.
    """
    if x.ndim != 4:
        raise DimensionError(f"batch_norm expects [B,C,H,W], got {x.shape}")
    channels = x.shape[1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise DimensionError(
            f"batch_norm affine shapes {gamma.shape}/{beta.shape} do not match "
            f"{channels} channels"
        )
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown batch_norm mode {mode!r}")
    eps = state.eps
    if mode == "train":
        if x.shape[0] < 2:
            raise DimensionError(
                f"batch_norm in train mode needs a batch of at least 2, got {x.shape[0]}"
            )
        axes = (0, 2, 3)
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        m = state.momentum
        state.running_mean[...] = (1 - m) * state.running_mean + m * mean
        state.running_var[...] = (1 - m) * state.running_var + m * var
    else:
        mean = state.running_mean
        var = state.running_var
    mean_b = mean.reshape(1, channels, 1, 1)
    inv_std = 1.0 / np.sqrt(var + eps)
    inv_std_b = inv_std.reshape(1, channels, 1, 1)
    xhat = (x.data - mean_b) * inv_std_b
    out = Tensor._node(gamma.data.reshape(1, channels, 1, 1) * xhat
                       + beta.data.reshape(1, channels, 1, 1), (x, gamma, beta))
    if out.requires_grad:
        def _backward():
            g = out.grad
            if beta.requires_grad:
                beta._accum(g.sum(axis=(0, 2, 3)))
            if gamma.requires_grad:
                gamma._accum((g * xhat).sum(axis=(0, 2, 3)))
            if x.requires_grad:
                gx = g * gamma.data.reshape(1, channels, 1, 1)
                if mode == "train":
                    n = x.shape[0] * x.shape[2] * x.shape[3]
                    mean_g = gx.mean(axis=(0, 2, 3)).reshape(1, channels, 1, 1)
                    mean_gx = (gx * xhat).mean(axis=(0, 2, 3)).reshape(1, channels, 1, 1)
                    x._accum(inv_std_b * (gx - mean_g - xhat * mean_gx))
                else:
                    x._accum(inv_std_b * gx)
        out._backward = _backward
    return out


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize along the last axis per position, then apply the affine map."""
    dim = x.shape[-1]
    if gamma.shape != (dim,) or beta.shape != (dim,):
        raise DimensionError(
            f"layer_norm affine shapes {gamma.shape}/{beta.shape} do not match "
            f"feature width {dim}"
        )
    mean = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv_std
    out = Tensor._node(gamma.data * xhat + beta.data, (x, gamma, beta))
    if out.requires_grad:
        lead_axes = tuple(range(x.ndim - 1))
        def _backward():
            g = out.grad
            if beta.requires_grad:
                beta._accum(g.sum(axis=lead_axes))
            if gamma.requires_grad:
                gamma._accum((g * xhat).sum(axis=lead_axes))
            if x.requires_grad:
                gx = g * gamma.data
                mean_g = gx.mean(axis=-1, keepdims=True)
                mean_gx = (gx * xhat).mean(axis=-1, keepdims=True)
                x._accum(inv_std * (gx - mean_g - xhat * mean_gx))
        out._backward = _backward
    return out


def softmax_lastdim(x: Tensor) -> Tensor:
    """Numerically stable softmax along the last axis (max subtraction)."""
    if np.isnan(x.data).any():
        raise NumericError("softmax received NaN input")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor._node(y, (x,))
    if out.requires_grad:
        def _backward():
            g = out.grad
            dot = (g * y).sum(axis=-1, keepdims=True)
            x._accum(y * (g - dot))
        out._backward = _backward
    return out


# ---------------------------------------------------------------------------
# elementwise nonlinearities
# ---------------------------------------------------------------------------


def square(x: Tensor) -> Tensor:
    out = Tensor._node(x.data * x.data, (x,))
    if out.requires_grad:
        def _backward():
            x._accum(out.grad * 2.0 * x.data)
        out._backward = _backward
    return out


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0.0):
        raise NumericError("log requires strictly positive inputs")
    out = Tensor._node(np.log(x.data), (x,))
    if out.requires_grad:
        def _backward():
            x._accum(out.grad / x.data)
        out._backward = _backward
    return out


def gelu(x: Tensor) -> Tensor:
    """Exact Gaussian-CDF GELU: ``x * Phi(x)``."""
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    out = Tensor._node(x.data * cdf, (x,))
    if out.requires_grad:
        def _backward():
            pdf = np.exp(-0.5 * x.data * x.data) * _INV_SQRT2PI
            x._accum(out.grad * (cdf + x.data * pdf))
        out._backward = _backward
    return out


_ELEMENTWISE = {"square": square, "log": log, "gelu": gelu}


def elementwise(x: Tensor, fn: str) -> Tensor:
    """Dispatch on the supported elementwise nonlinearity names."""
    try:
        return _ELEMENTWISE[fn](x)
    except KeyError:
        raise ValueError(f"unknown elementwise fn {fn!r}; expected one of "
                         f"{sorted(_ELEMENTWISE)}") from None


# ---------------------------------------------------------------------------
# pooling and reductions
# ---------------------------------------------------------------------------


def avg_pool_time(x: Tensor, k: int, s: int) -> Tensor:
    """Mean over length-``k`` windows of the last axis with stride ``s``."""
    if x.ndim != 3:
        raise DimensionError(f"avg_pool_time expects [B,D,L], got {x.shape}")
    length = x.shape[-1]
    if k > length:
        raise DimensionError(f"pooling window {k} exceeds sequence length {length}")
    windows = np.lib.stride_tricks.sliding_window_view(x.data, k, axis=-1)[..., ::s, :]
    out = Tensor._node(windows.mean(axis=-1), (x,))
    n_out = out.shape[-1]
    if out.requires_grad:
        def _backward():
            dx = np.zeros_like(x.data)
            g = out.grad / k
            for o in range(n_out):
                dx[..., o * s:o * s + k] += g[..., o:o + 1]
            x._accum(dx)
        out._backward = _backward
    return out


def sum_all(x: Tensor) -> Tensor:
    out = Tensor._node(x.data.sum(), (x,))
    if out.requires_grad:
        def _backward():
            x._accum(np.full(x.shape, out.grad, dtype=DTYPE))
        out._backward = _backward
    return out


def mean_all(x: Tensor) -> Tensor:
    n = x.size
    out = Tensor._node(x.data.mean(), (x,))
    if out.requires_grad:
        def _backward():
            x._accum(np.full(x.shape, out.grad / n, dtype=DTYPE))
        out._backward = _backward
    return out


# ---------------------------------------------------------------------------
# loss-side primitives
# ---------------------------------------------------------------------------


def pick_class(probs: Tensor, labels: np.ndarray) -> Tensor:
    """Select one column per row: ``out[i] = probs[i, labels[i]]``."""
    labels = np.asarray(labels)
    if probs.ndim != 2:
        raise DimensionError(f"pick_class expects [N,K], got {probs.shape}")
    if labels.shape != (probs.shape[0],):
        raise DimensionError(
            f"labels length {labels.shape} does not match batch {probs.shape[0]}"
        )
    rows = np.arange(probs.shape[0])
    out = Tensor._node(probs.data[rows, labels], (probs,))
    if out.requires_grad:
        def _backward():
            dp = np.zeros_like(probs.data)
            dp[rows, labels] = out.grad
            probs._accum(dp)
        out._backward = _backward
    return out


def pairwise_distance(emb: Tensor, idx_i: np.ndarray, idx_j: np.ndarray,
                      eps: float = 1e-12) -> Tensor:
    """Euclidean distances between embedding rows ``idx_i`` and ``idx_j``.

    Computed as ``sqrt(sum((e_i - e_j)^2) + eps)`` so the distance stays
    differentiable at coincident pairs (their gradient is ~0 by convention).
    """
    if emb.ndim != 2:
        raise DimensionError(f"pairwise_distance expects [N,E], got {emb.shape}")
    idx_i = np.asarray(idx_i, dtype=np.intp)
    idx_j = np.asarray(idx_j, dtype=np.intp)
    diff = emb.data[idx_i] - emb.data[idx_j]
    dist = np.sqrt((diff * diff).sum(axis=1) + eps)
    out = Tensor._node(dist, (emb,))
    if out.requires_grad:
        def _backward():
            coef = (out.grad / dist)[:, None] * diff
            de = np.zeros_like(emb.data)
            np.add.at(de, idx_i, coef)
            np.add.at(de, idx_j, -coef)
            emb._accum(de)
        out._backward = _backward
    return out


def clamp_max(x: Tensor, cap: float) -> Tensor:
    """Elementwise ``min(x, cap)``; gradient passes only where ``x < cap``."""
    mask = x.data < cap
    out = Tensor._node(np.where(mask, x.data, cap), (x,))
    if out.requires_grad:
        def _backward():
            x._accum(out.grad * mask)
        out._backward = _backward
    return out
