"""Dense tensors with reverse-mode automatic differentiation.

Every differentiable operation creates a new :class:`Tensor` carrying a
closure that maps the output gradient to gradients of its inputs. Nodes get a
monotonically increasing id at creation, so sorting the reachable nodes by id
descending is a valid reverse topological order and makes backward
traversal deterministic.

Binary elementwise operations accept operands of identical shape, Python
scalars, or operands of equal rank whose axes are either equal or 1
(keepdims-style singleton broadcasting, e.g. a ``(b, 1, 1, c)`` bias or a
``(b, h, w, 1)`` mask).
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float64
# longdouble is only used by the extended-precision finite-difference oracle
_FLOAT_DTYPES = (np.float32, np.float64, np.longdouble)

_ids = itertools.count()
_grad_enabled = True
_debug_checks = False


class AutodiffError(RuntimeError):
    pass


@contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def set_debug_checks(flag: bool) -> None:
    """Raise on division by zero and log of non-positive values when enabled."""
    global _debug_checks
    _debug_checks = bool(flag)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_backward", "_id")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            arr = np.asarray(data)
            dtype = arr.dtype if arr.dtype in _FLOAT_DTYPES else DEFAULT_DTYPE
        self.data = np.asarray(data, dtype=dtype, order="C")
        self.requires_grad = requires_grad
        self.grad = None
        self.op = "leaf"
        self._parents: tuple = ()
        self._backward = None
        self._id = next(_ids)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r})"

    # arithmetic sugar
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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def backward(self) -> None:
        backward(self)


class Parameter(Tensor):
    """A named trainable tensor. ``grad`` starts as zeros of the same shape."""

    __slots__ = ("name",)

    def __init__(self, name: str, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(x, dtype=dtype)


def _record(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable, op: str) -> Tensor:
    needs = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs, dtype=data.dtype)
    out.op = op
    if needs:
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if len(shape) == 0:
        return np.asarray(grad.sum())
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    return grad.sum(axis=axes, keepdims=True)


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return
    if a.ndim != b.ndim or any(x != y and x != 1 and y != 1 for x, y in zip(a.shape, b.shape)):
        raise ValueError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _binary(a, b, op: str):
    if not isinstance(a, Tensor):
        a = as_tensor(a, like=b)
    if not isinstance(b, Tensor):
        b = as_tensor(b, like=a)
    _check_broadcast(a, b, op)
    return a, b


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = _binary(a, b, "add")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = _binary(a, b, "sub")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = _binary(a, b, "mul")

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record(a.data * b.data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = _binary(a, b, "div")
    if _debug_checks and np.any(b.data == 0):
        raise ZeroDivisionError(f"div: zero in denominator of shape {b.shape}")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data

    def bw(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            ga = g / b.data
            gb = -g * out / b.data
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _record(out, (a, b), bw, "div")


def neg(a: Tensor) -> Tensor:
    return _record(-a.data, (a,), lambda g: (-g,), "neg")


def _unary(a: Tensor, out: np.ndarray, deriv: Callable[[], np.ndarray], op: str) -> Tensor:
    return _record(out, (a,), lambda g: (g * deriv(),), op)


def tabs(a: Tensor) -> Tensor:
    # subgradient 0 at exactly 0
    return _unary(a, np.abs(a.data), lambda: np.sign(a.data), "abs")


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)

    def deriv():
        with np.errstate(divide="ignore"):
            return 0.5 / out

    return _unary(a, out, deriv, "sqrt")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _unary(a, out, lambda: out, "exp")


def log(a: Tensor) -> Tensor:
    if _debug_checks and np.any(a.data <= 0):
        raise ValueError("log: non-positive input")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return _unary(a, out, lambda: 1.0 / a.data, "log")


def relu(a: Tensor) -> Tensor:
    return _unary(a, np.maximum(a.data, 0), lambda: (a.data > 0).astype(a.dtype), "relu")


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    pos = a.data > 0
    out = np.where(pos, a.data, slope * a.data)
    return _unary(a, out, lambda: np.where(pos, 1.0, slope).astype(a.dtype), "leaky_relu")


def elu(a: Tensor, alpha: float = 1.0) -> Tensor:
    pos = a.data > 0
    em1 = np.expm1(np.minimum(a.data, 0))
    out = np.where(pos, a.data, alpha * em1)
    return _unary(a, out, lambda: np.where(pos, 1.0, alpha * (em1 + 1.0)).astype(a.dtype), "elu")


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype)


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid_np(a.data)
    return _unary(a, out, lambda: out * (1.0 - out), "sigmoid")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _unary(a, out, lambda: 1.0 - out * out, "tanh")


def softplus(a: Tensor) -> Tensor:
    """log(1 + e^x), evaluated without overflow."""
    out = np.maximum(a.data, 0) + np.log1p(np.exp(-np.abs(a.data)))
    return _unary(a, out, lambda: _sigmoid_np(a.data), "softplus")


# ---------------------------------------------------------------- reductions and shape

def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.asarray(a.data.sum(axis=axis, keepdims=keepdims))

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _record(out, (a,), bw, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.shape[i] for i in axes]))
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a: Tensor, shape) -> Tensor:
    return _record(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    inv = np.argsort(axes)
    return _record(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),), "transpose")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw, "concat")


# ---------------------------------------------------------------- linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; ``b`` may be 2-D against a batched ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    if b.ndim != 2 and a.shape[:-2] != b.shape[:-2]:
        raise ValueError(f"matmul: batch dims differ {a.shape} and {b.shape}")
    out = np.matmul(a.data, b.data)

    def bw(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        if b.ndim == 2 and a.ndim > 2:
            k, n = b.shape
            gb = a.data.reshape(-1, k).T @ g.reshape(-1, n)
        else:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return ga, gb

    return _record(out, (a, b), bw, "matmul")


# ---------------------------------------------------------------- image ops

def _conv_geometry(size: int, k: int, stride: int, dilation: int, padding: str) -> tuple[int, int, int]:
    span = (k - 1) * dilation + 1
    if padding == "same":
        out = -(-size // stride)
        total = max((out - 1) * stride + span - size, 0)
        return out, total // 2, total - total // 2
    if padding == "valid":
        out = (size - span) // stride + 1
        if out < 1:
            raise ValueError(f"conv2d: input size {size} smaller than kernel span {span}")
        return out, 0, 0
    raise ValueError(f"conv2d: unknown padding {padding!r}")


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride: int = 1,
           dilation: int = 1, padding: str = "same") -> Tensor:
    """Dilated, strided cross-correlation over NHWC input with a (k, k, c_in, c_out) kernel."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    if stride < 1 or dilation < 1:
        raise ValueError("conv2d: stride and dilation must be >= 1")
    if x.ndim != 4 or kernel.ndim != 4:
        raise ValueError(f"conv2d: expected 4-D input and kernel, got {x.shape} and {kernel.shape}")
    b, h, w, cin = x.shape
    k, k2, kc, cout = kernel.shape
    if k != k2 or k < 1:
        raise ValueError(f"conv2d: kernel must be square, got {kernel.shape}")
    if kc != cin:
        raise ValueError(f"conv2d: kernel {kernel.shape} expects {kc} input channels "
                         f"but input {x.shape} has {cin}")
    if bias is not None and bias.shape != (cout,):
        raise ValueError(f"conv2d: bias shape {bias.shape} does not match c_out={cout}")

    oh, pt, pb = _conv_geometry(h, k, stride, dilation, padding)
    ow, pl, pr = _conv_geometry(w, k, stride, dilation, padding)
    d = dilation
    if k == 1 and stride == 1 and pt == pb == pl == pr == 0:
        xp = x.data
        cols = x.data.reshape(-1, cin)
    else:
        xp = np.pad(x.data, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
        cols6 = np.empty((b, oh, ow, k, k, cin), dtype=x.dtype)
        for i in range(k):
            for j in range(k):
                cols6[:, :, :, i, j, :] = xp[:, i * d: i * d + stride * (oh - 1) + 1: stride,
                                             j * d: j * d + stride * (ow - 1) + 1: stride, :]
        cols = cols6.reshape(b * oh * ow, k * k * cin)
    kmat = kernel.data.reshape(k * k * cin, cout)
    out = cols @ kmat
    if bias is not None:
        out = out + bias.data
    out = out.reshape(b, oh, ow, cout)

    def bw(g):
        g2 = g.reshape(-1, cout)
        gk = (cols.T @ g2).reshape(kernel.shape) if kernel.requires_grad else None
        gb = g2.sum(axis=0) if bias is not None and bias.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = g2 @ kmat.T
            if xp is x.data:
                gx = gcols.reshape(x.shape)
            else:
                gcols = gcols.reshape(b, oh, ow, k, k, cin)
                gxp = np.zeros(xp.shape, dtype=x.dtype)
                for i in range(k):
                    for j in range(k):
                        gxp[:, i * d: i * d + stride * (oh - 1) + 1: stride,
                            j * d: j * d + stride * (ow - 1) + 1: stride, :] += gcols[:, :, :, i, j, :]
                gx = gxp[:, pt:pt + h, pl:pl + w, :]
        return (gx, gk) if bias is None else (gx, gk, gb)

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return _record(out, parents, bw, "conv2d")


def global_avg_pool(x: Tensor) -> Tensor:
    if x.ndim != 4:
        raise ValueError(f"global_avg_pool: expected NHWC input, got {x.shape}")
    return mean(x, axis=(1, 2), keepdims=True)


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    if factor < 1:
        raise ValueError("upsample_nearest: factor must be >= 1")
    if factor == 1:
        return x
    b, h, w, c = x.shape
    out = np.repeat(np.repeat(x.data, factor, axis=1), factor, axis=2)

    def bw(g):
        return (g.reshape(b, h, factor, w, factor, c).sum(axis=(2, 4)),)

    return _record(out, (x,), bw, "upsample_nearest")


def pad_edge(x: Tensor, width: int) -> Tensor:
    """Replicate-pad the two spatial axes of an NHWC tensor by ``width``."""
    if width < 0:
        raise ValueError("pad_edge: width must be >= 0")
    b, h, w, c = x.shape
    rows = np.clip(np.arange(h + 2 * width) - width, 0, h - 1)
    cols = np.clip(np.arange(w + 2 * width) - width, 0, w - 1)
    out = x.data[:, rows][:, :, cols]

    def bw(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (slice(None), rows[:, None], cols[None, :]), g)
        return (gx,)

    return _record(out, (x,), bw, "pad_edge")


# ---------------------------------------------------------------- engine

def _topo(root: Tensor) -> list[Tensor]:
    seen: dict[int, Tensor] = {}
    stack = [root]
    while stack:
        node = stack.pop()
        if node._id in seen:
            continue
        seen[node._id] = node
        stack.extend(p for p in node._parents if p.requires_grad)
    return [seen[i] for i in sorted(seen, reverse=True)]


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf requiring grad."""
    if loss.data.size != 1 or loss.ndim > 1:
        raise AutodiffError(f"backward: loss must be a scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise AutodiffError("backward: loss does not depend on any tensor requiring grad")
    grads: dict[int, np.ndarray] = {loss._id: np.ones_like(loss.data)}
    for node in _topo(loss):
        g = grads.pop(node._id, None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent._id in grads:
                grads[parent._id] = grads[parent._id] + pg
            else:
                grads[parent._id] = pg


def finite_diff_check(f: Callable[[], Tensor], params: Iterable[Tensor], epsilon: float = 1e-6,
                      max_coords: int | None = None, seed: int = 0, extended: bool = False) -> float:
    """Compare autodiff gradients of scalar ``f()`` with central differences.

    ``f`` must be deterministic and read the current values of ``params``.
    Returns the max over checked coordinates of |a - n| / max(|a|, |n|, 1e-8).
    When ``max_coords`` is set, at most that many coordinates per tensor are
    sampled (seeded) instead of checking every one. With ``extended`` the
    perturbed evaluations run in ``np.longdouble`` so the numerical side is not
    limited by float64 rounding of ``f``; the autodiff side is unchanged.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon {epsilon} outside [1e-7, 1e-3]")
    params = list(params)
    for p in params:
        p.grad = np.zeros_like(p.data)
    backward(f())
    analytic = [p.grad.copy() for p in params]
    originals = [p.data for p in params]
    if extended:
        for p in params:
            p.data = p.data.astype(np.longdouble)
    rng = np.random.default_rng(seed)
    worst = 0.0
    try:
        for p, grad in zip(params, analytic):
            flat = p.data.reshape(-1)
            coords = np.arange(flat.size)
            if max_coords is not None and flat.size > max_coords:
                coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
            for idx in coords:
                orig = flat[idx]
                with no_grad():
                    flat[idx] = orig + epsilon
                    fp = f().data
                    flat[idx] = orig - epsilon
                    fm = f().data
                flat[idx] = orig
                num = float((fp - fm) / (2 * epsilon))
                a = float(grad.reshape(-1)[idx])
                err = abs(a - num) / max(abs(a), abs(num), 1e-8)
                worst = max(worst, err)
    finally:
        for p, data in zip(params, originals):
            p.data = data
    return worst
