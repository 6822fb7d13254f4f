"""Dense float64 tensors with tape-based reverse-mode differentiation.

Everything is 64-bit and CPU-only. A Tensor either is a leaf (holding data,
optionally marked trainable via ``requires_grad``) or was produced by an
operation, in which case it keeps references to its parents and a closure
that maps the output gradient to parent gradients. ``backward`` walks the
recorded graph once, in reverse topological order.

Graphs are rebuilt from scratch every forward pass; optimizers mutate leaf
``.data`` buffers between passes. Values and gradients are checked for
NaN/Inf as they are produced and a ``NonFiniteError`` is raised on the first
offender.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "NonFiniteError",
    "ShapeError",
    "graph_op",
    "add",
    "mul",
    "concat",
    "narrow",
    "dense",
    "conv2d",
    "conv_transpose2d",
    "upsample_nearest",
    "relu",
    "elu",
    "tanh",
    "sigmoid",
    "exp",
    "mse",
    "l2_norm",
]


class NonFiniteError(FloatingPointError):
    """A value or gradient contained NaN or Inf."""


class ShapeError(ValueError):
    """Operands have incompatible dimensions."""


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values in {what}")


class Tensor:
    """A dense float64 array, optionally tracked for differentiation."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_op", "_done")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        _check_finite(arr, "tensor data")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self._op = ""
        self._done = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flags = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flags}, op={self._op!r})"

    # Operator sugar; the full rules live in the module-level functions.
    def __add__(self, other):
        return add(self, _as_tensor(other, like=self))

    def __sub__(self, other):
        return add(self, mul(_as_tensor(other, like=self), -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def reshape(self, *shape: int) -> "Tensor":
        return reshape(self, shape)

    def sum(self) -> "Tensor":
        return tensor_sum(self)

    def exp(self) -> "Tensor":
        return exp(self)

    def tanh(self) -> "Tensor":
        return tanh(self)

    def relu(self) -> "Tensor":
        return relu(self)

    def sigmoid(self) -> "Tensor":
        return sigmoid(self)

    def backward(self) -> None:
        """Populate ``.grad`` on every tensor that influenced this scalar.

        Raises on a non-scalar loss, on a tensor with no recorded graph, and
        on a second call for the same loss node (graphs are single-use; build
        a fresh forward pass per optimization step).
        """
        if self.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {self.shape}")
        if self._backward_fn is None:
            raise RuntimeError("backward on a detached tensor: no recorded graph")
        if self._done:
            raise RuntimeError("backward already ran for this loss; rebuild the graph")
        self._done = True

        # Iterative reverse topological order over the recorded graph.
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
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward_fn is None or node.grad is None:
                continue
            parent_grads = node._backward_fn(node.grad)
            for parent, g in zip(node._parents, parent_grads):
                if g is None or not parent.requires_grad:
                    continue
                _check_finite(g, f"gradient from {node._op!r}")
                if g.shape != parent.shape:
                    raise ShapeError(
                        f"gradient shape {g.shape} != value shape {parent.shape} in {node._op!r}"
                    )
                parent.grad = g if parent.grad is None else parent.grad + g


def _as_tensor(value, like: Tensor | None = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    arr = np.asarray(value, dtype=np.float64)
    if like is not None and arr.ndim == 0:
        arr = np.broadcast_to(arr, like.shape).copy()
    return Tensor(arr)


def graph_op(
    out_data: np.ndarray,
    parents: Sequence[Tensor],
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]],
    op: str,
) -> Tensor:
    """Wrap ``out_data`` as a graph node.

    ``backward`` receives the output gradient and returns one gradient (or
    None) per parent. Extension point for modules that define their own
    linear maps over tensors.
    """
    out = Tensor(out_data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward_fn = backward
        out._op = op
    return out


# ---------------------------------------------------------------------------
# elementwise and shape ops


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; shapes must match exactly (no broadcasting)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")
    return graph_op(a.data + b.data, (a, b), lambda g: (g, g), "add")


def mul(a: Tensor, b) -> Tensor:
    """Elementwise product with an equal-shape tensor or a python scalar."""
    a = _as_tensor(a)
    if isinstance(b, (int, float, np.floating, np.integer)):
        s = float(b)
        return graph_op(a.data * s, (a,), lambda g: (g * s,), "mul_scalar")
    b = _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} differ")
    return graph_op(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "mul")


def reshape(t: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    old = t.shape
    return graph_op(t.data.reshape(shape), (t,), lambda g: (g.reshape(old),), "reshape")


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(
            np.take(g, range(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(parts))
        )

    return graph_op(np.concatenate([p.data for p in parts], axis=axis), parts, backward, "concat")


def narrow(t: Tensor, start: int, length: int) -> Tensor:
    """Contiguous 1-D slice ``t[start:start+length]`` with scatter gradient."""
    if t.ndim != 1:
        raise ShapeError(f"narrow expects a 1-D tensor, got shape {t.shape}")
    if start < 0 or start + length > t.size:
        raise ShapeError(f"narrow [{start}:{start + length}] out of bounds for size {t.size}")

    def backward(g):
        full = np.zeros_like(t.data)
        full[start : start + length] = g
        return (full,)

    return graph_op(t.data[start : start + length].copy(), (t,), backward, "narrow")


def tensor_sum(t: Tensor) -> Tensor:
    return graph_op(
        np.asarray(t.data.sum()), (t,), lambda g: (np.broadcast_to(g, t.shape).copy(),), "sum"
    )


def exp(t: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(t.data)
    return graph_op(out, (t,), lambda g: (g * out,), "exp")


# ---------------------------------------------------------------------------
# activations


def relu(t: Tensor) -> Tensor:
    # subgradient at 0 is taken as 0
    mask = t.data > 0.0
    return graph_op(np.where(mask, t.data, 0.0), (t,), lambda g: (g * mask,), "relu")


def elu(t: Tensor, alpha: float = 1.0) -> Tensor:
    # expm1 evaluated on the clamped input only, to avoid overflow noise
    neg = alpha * np.expm1(np.minimum(t.data, 0.0))
    pos_mask = t.data > 0.0
    out = np.where(pos_mask, t.data, neg)
    return graph_op(out, (t,), lambda g: (g * np.where(pos_mask, 1.0, neg + alpha),), "elu")


def tanh(t: Tensor) -> Tensor:
    out = np.tanh(t.data)
    return graph_op(out, (t,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(t: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * t.data))
    return graph_op(out, (t,), lambda g: (g * out * (1.0 - out),), "sigmoid")


# ---------------------------------------------------------------------------
# dense / losses


def dense(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map ``x @ w + b`` for ``x`` of shape (k,) or (N, k)."""
    if w.ndim != 2:
        raise ShapeError(f"dense weight must be 2-D, got {w.shape}")
    if x.ndim not in (1, 2) or x.shape[-1] != w.shape[0]:
        raise ShapeError(f"dense: input {x.shape} incompatible with weight {w.shape}")
    if b is not None and b.shape != (w.shape[1],):
        raise ShapeError(f"dense: bias {b.shape} incompatible with weight {w.shape}")

    out = x.data @ w.data
    if b is not None:
        out = out + b.data

    def backward(g):
        gx = g @ w.data.T
        if x.ndim == 1:
            gw = np.outer(x.data, g)
            gb = None if b is None else g.copy()
        else:
            gw = x.data.T @ g
            gb = None if b is None else g.sum(axis=0)
        return (gx, gw, gb) if b is not None else (gx, gw)

    parents = (x, w) if b is None else (x, w, b)
    return graph_op(out, parents, backward, "dense")


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared error over all elements."""
    if a.shape != b.shape:
        raise ShapeError(f"mse: shapes {a.shape} and {b.shape} differ")
    diff = a.data - b.data
    n = diff.size

    def backward(g):
        scale = g * (2.0 / n)
        return (scale * diff, -scale * diff)

    return graph_op(np.asarray((diff * diff).mean()), (a, b), backward, "mse")


def l2_norm(t: Tensor) -> Tensor:
    """Euclidean norm over all elements; gradient at the origin is 0."""
    with np.errstate(over="ignore"):
        norm = float(np.sqrt((t.data * t.data).sum()))

    def backward(g):
        if norm == 0.0:
            return (np.zeros_like(t.data),)
        return (g * (t.data / norm),)

    return graph_op(np.asarray(norm), (t,), backward, "l2_norm")


# ---------------------------------------------------------------------------
# spatial ops (NCHW layout)


def _conv_out_size(extent: int, k: int, stride: int, pad: int) -> int:
    return (extent + 2 * pad - k) // stride + 1


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int, ho: int, wo: int) -> np.ndarray:
    n, c, _, _ = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = np.empty((n, c, kh, kw, ho, wo), dtype=np.float64)
    for p in range(kh):
        for q in range(kw):
            cols[:, :, p, q] = xp[:, :, p : p + stride * ho : stride, q : q + stride * wo : stride]
    return cols.reshape(n, c * kh * kw, ho * wo)


def _col2im(
    cols: np.ndarray,
    x_shape: tuple[int, ...],
    kh: int,
    kw: int,
    stride: int,
    pad: int,
    ho: int,
    wo: int,
) -> np.ndarray:
    n, c, h, w = x_shape
    cols = cols.reshape(n, c, kh, kw, ho, wo)
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=np.float64)
    for p in range(kh):
        for q in range(kw):
            xp[:, :, p : p + stride * ho : stride, q : q + stride * wo : stride] += cols[
                :, :, p, q
            ]
    return xp[:, :, pad : pad + h, pad : pad + w] if pad else xp


def _check_conv_args(x: Tensor, w: Tensor, b: Tensor | None, op: str) -> None:
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"{op}: input and weight must be 4-D, got {x.shape} and {w.shape}")
    if b is not None and b.ndim != 1:
        raise ShapeError(f"{op}: bias must be 1-D, got {b.shape}")


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation of ``x`` (N,C,H,W) with ``w`` (O,C,kh,kw).

    Output spatial size is floor((H + 2*pad - kh)/stride) + 1. Gradients are
    defined with respect to input, weight, and bias.
    """
    _check_conv_args(x, w, b, "conv2d")
    n, c, h, wd = x.shape
    o, cw, kh, kw = w.shape
    if cw != c:
        raise ShapeError(f"conv2d: input has {c} channels but weight expects {cw}")
    if kh > h + 2 * pad or kw > wd + 2 * pad:
        raise ShapeError(f"conv2d: kernel ({kh},{kw}) larger than padded input ({h + 2 * pad},{wd + 2 * pad})")
    if b is not None and b.shape != (o,):
        raise ShapeError(f"conv2d: bias {b.shape} does not match {o} output channels")
    ho, wo = _conv_out_size(h, kh, stride, pad), _conv_out_size(wd, kw, stride, pad)
    if ho < 1 or wo < 1:
        raise ShapeError("conv2d: output would be empty")

    cols = _im2col(x.data, kh, kw, stride, pad, ho, wo)
    wm = w.data.reshape(o, -1)
    out = np.matmul(wm, cols).reshape(n, o, ho, wo)
    if b is not None:
        out = out + b.data[None, :, None, None]

    def backward(g):
        gm = g.reshape(n, o, ho * wo)
        gw = np.einsum("nol,nkl->ok", gm, cols).reshape(w.shape)
        gcols = np.matmul(wm.T, gm)
        gx = _col2im(gcols, x.shape, kh, kw, stride, pad, ho, wo)
        gb = None if b is None else g.sum(axis=(0, 2, 3))
        return (gx, gw, gb) if b is not None else (gx, gw)

    parents = (x, w) if b is None else (x, w, b)
    return graph_op(out, parents, backward, "conv2d")


def conv_transpose2d(
    x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, pad: int = 0
) -> Tensor:
    """Adjoint of conv2d with the same (stride, pad).

    ``x`` is (N,Ci,H,W) and ``w`` is (Ci,Co,kh,kw); output spatial size is
    (H-1)*stride - 2*pad + kh. For any x, u, w:
    <conv2d(x, w), u> == <x, conv_transpose2d(u, w)>.
    """
    _check_conv_args(x, w, b, "conv_transpose2d")
    n, ci, h, wd = x.shape
    cwi, co, kh, kw = w.shape
    if cwi != ci:
        raise ShapeError(f"conv_transpose2d: input has {ci} channels but weight expects {cwi}")
    ho = (h - 1) * stride - 2 * pad + kh
    wo = (wd - 1) * stride - 2 * pad + kw
    if ho < 1 or wo < 1:
        raise ShapeError("conv_transpose2d: output would be empty")
    if b is not None and b.shape != (co,):
        raise ShapeError(f"conv_transpose2d: bias {b.shape} does not match {co} output channels")

    wm = w.data.reshape(ci, co * kh * kw)
    gm = x.data.reshape(n, ci, h * wd)
    cols = np.matmul(wm.T, gm)
    out = _col2im(cols, (n, co, ho, wo), kh, kw, stride, pad, h, wd)
    if b is not None:
        out = out + b.data[None, :, None, None]

    def backward(g):
        gcols = _im2col(g, kh, kw, stride, pad, h, wd)
        gx = np.matmul(wm, gcols).reshape(x.shape)
        gw = np.einsum("nil,nkl->ik", gm, gcols).reshape(w.shape)
        gb = None if b is None else g.sum(axis=(0, 2, 3))
        return (gx, gw, gb) if b is not None else (gx, gw)

    parents = (x, w) if b is None else (x, w, b)
    return graph_op(out, parents, backward, "conv_transpose2d")


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    """Nearest-neighbour upsampling of the two trailing spatial dims."""
    if x.ndim != 4:
        raise ShapeError(f"upsample_nearest expects (N,C,H,W), got {x.shape}")
    if factor < 1:
        raise ShapeError(f"upsample factor must be >= 1, got {factor}")
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)

    def backward(g):
        return (g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)),)

    return graph_op(out, (x,), backward, "upsample_nearest")
