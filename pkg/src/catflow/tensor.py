"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every op records its backward closure on the result node; ``backward`` walks
the tape once in reverse topological order and then frees it, so graphs are
per-forward-pass and leaves keep accumulating into ``.grad`` across passes.
Broadcasting is deliberately restricted: shapes must be equal, differ only by
leading axes (the smaller shape is a suffix of the larger), or expand size-1
axes on one side only. Anything else raises with both shapes named.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "softmax",
    "log",
    "exp",
    "sqrt",
    "maximum",
    "relu",
    "tsum",
    "tmean",
    "tmax",
    "tmin",
    "tstd",
    "concat",
    "transpose",
    "reshape",
    "broadcast_to",
    "narrow",
    "backward",
    "REGISTERED_OPS",
]


class Tensor:
    """A float64 array plus an optional gradient buffer and tape linkage."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar; scalars and ndarrays are wrapped as constants
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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _broadcast_shape(sa: tuple, sb: tuple) -> tuple:
    """Output shape under the restricted broadcast rules; raises otherwise."""
    if sa == sb:
        return sa
    if len(sa) != len(sb):
        small, big = (sa, sb) if len(sa) < len(sb) else (sb, sa)
        if big[len(big) - len(small):] == small:
            return big
        raise ValueError(
            f"shapes {sa} and {sb} do not conform: broadcasting is limited to "
            f"leading axes (smaller shape must be a suffix of the larger)"
        )
    out = []
    a_grows = b_grows = False
    for da, db in zip(sa, sb):
        if da == db:
            out.append(da)
        elif da == 1:
            out.append(db)
            a_grows = True
        elif db == 1:
            out.append(da)
            b_grows = True
        else:
            raise ValueError(f"shapes {sa} and {sb} do not conform on a non-unit axis")
    if a_grows and b_grows:
        raise ValueError(
            f"shapes {sa} and {sb} would require two-sided expansion; "
            f"only one operand may broadcast"
        )
    return tuple(out)


def _sum_to_shape(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to an operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gd, sd) in enumerate(zip(g.shape, shape)) if sd == 1 and gd != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _from_op(data: np.ndarray, parents: tuple, backward_fn) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every requires_grad ancestor of a scalar loss.

    The tape is freed as it is consumed; repeated backward passes through
    fresh forward graphs accumulate into existing leaf gradients.
    """
    if not isinstance(loss, Tensor):
        raise TypeError("backward expects a Tensor")
    if loss.data.shape != ():
        raise ValueError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    pending: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}

    def push(node: Tensor, contrib: np.ndarray) -> None:
        key = id(node)
        if key in pending:
            pending[key] = pending[key] + contrib
        else:
            pending[key] = contrib

    for node in reversed(order):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        g = np.asarray(g, dtype=np.float64)
        if g.shape != node.data.shape:
            g = np.broadcast_to(g, node.data.shape)
        if node.grad is None:
            # leaves keep their own buffer; transient interior grads may share
            node.grad = np.array(g, dtype=np.float64) if node._backward is None else g
        else:
            node.grad = node.grad + g
        if node._backward is not None:
            node._backward(g, push)
        node._parents = ()
        node._backward = None


# ---------------------------------------------------------------------------
# elementwise ops
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a.data.shape, b.data.shape)
    out = a.data + b.data

    def bwd(g, push):
        if a.requires_grad:
            push(a, _sum_to_shape(g, a.data.shape))
        if b.requires_grad:
            push(b, _sum_to_shape(g, b.data.shape))

    return _from_op(out, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a.data.shape, b.data.shape)
    out = a.data - b.data

    def bwd(g, push):
        if a.requires_grad:
            push(a, _sum_to_shape(g, a.data.shape))
        if b.requires_grad:
            push(b, _sum_to_shape(-g, b.data.shape))

    return _from_op(out, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a.data.shape, b.data.shape)
    out = a.data * b.data

    def bwd(g, push):
        if a.requires_grad:
            push(a, _sum_to_shape(g * b.data, a.data.shape))
        if b.requires_grad:
            push(b, _sum_to_shape(g * a.data, b.data.shape))

    return _from_op(out, (a, b), bwd)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a.data.shape, b.data.shape)
    out = a.data / b.data

    def bwd(g, push):
        if a.requires_grad:
            push(a, _sum_to_shape(g / b.data, a.data.shape))
        if b.requires_grad:
            push(b, _sum_to_shape(-g * a.data / (b.data * b.data), b.data.shape))

    return _from_op(out, (a, b), bwd)


def neg(a) -> Tensor:
    a = _as_tensor(a)

    def bwd(g, push):
        push(a, -g)

    return _from_op(-a.data, (a,), bwd)


def log(a) -> Tensor:
    a = _as_tensor(a)

    def bwd(g, push):
        push(a, g / a.data)

    return _from_op(np.log(a.data), (a,), bwd)


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out = np.exp(a.data)

    def bwd(g, push):
        push(a, g * out)

    return _from_op(out, (a,), bwd)


def sqrt(a) -> Tensor:
    """Square root with a guarded backward: safe at exactly zero inputs."""
    a = _as_tensor(a)
    out = np.sqrt(a.data)

    def bwd(g, push):
        push(a, g / (2.0 * np.maximum(out, 1e-12)))

    return _from_op(out, (a,), bwd)


def maximum(a, floor: float) -> Tensor:
    """Elementwise clamp against a scalar floor; gradient passes where a >= floor."""
    a = _as_tensor(a)
    floor = float(floor)
    out = np.maximum(a.data, floor)

    def bwd(g, push):
        push(a, g * (a.data >= floor))

    return _from_op(out, (a,), bwd)


def relu(a) -> Tensor:
    return maximum(a, 0.0)


# ---------------------------------------------------------------------------
# structural ops
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError(
            f"matmul requires operands with ndim >= 2, got {a.data.shape} and {b.data.shape}"
        )
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ValueError(f"matmul inner dimensions differ: {a.data.shape} vs {b.data.shape}")
    if a.data.ndim != b.data.ndim:
        small, big = (a.data.shape, b.data.shape) if a.data.ndim < b.data.ndim else (b.data.shape, a.data.shape)
        if big[len(big) - len(small): -2] != small[:-2]:
            raise ValueError(
                f"matmul leading axes do not conform: {a.data.shape} vs {b.data.shape}"
            )
    k = a.data.shape[-1]
    m = b.data.shape[-1]
    if b.data.ndim == 2 and a.data.ndim > 2:
        # single GEMM instead of a batched loop
        out = (a.data.reshape(-1, k) @ b.data).reshape(a.data.shape[:-1] + (m,))
    else:
        out = a.data @ b.data

    def bwd(g, push):
        if a.requires_grad:
            if b.data.ndim == 2 and g.ndim > 2:
                ga = (g.reshape(-1, m) @ b.data.T).reshape(a.data.shape)
                push(a, ga)
            else:
                push(a, _sum_to_shape(g @ np.swapaxes(b.data, -1, -2), a.data.shape))
        if b.requires_grad:
            if b.data.ndim == 2 and a.data.ndim >= 2:
                push(b, a.data.reshape(-1, k).T @ g.reshape(-1, m))
            else:
                push(b, _sum_to_shape(np.swapaxes(a.data, -1, -2) @ g, b.data.shape))

    return _from_op(out, (a, b), bwd)


def softmax(a) -> Tensor:
    """Numerically stable softmax over the last axis."""
    a = _as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def bwd(g, push):
        inner = (g * out).sum(axis=-1, keepdims=True)
        push(a, (g - inner) * out)

    return _from_op(out, (a,), bwd)


def _normalize_axis(axis, ndim):
    if axis is None:
        return None
    return axis % ndim


def _expand_reduced(g: np.ndarray, shape: tuple, axis, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    axis = _normalize_axis(axis, a.data.ndim)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g, push):
        push(a, _expand_reduced(g, a.data.shape, axis, keepdims))

    return _from_op(out, (a,), bwd)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    axis = _normalize_axis(axis, a.data.ndim)
    n = a.data.size if axis is None else a.data.shape[axis]
    out = a.data.mean(axis=axis, keepdims=keepdims)

    def bwd(g, push):
        push(a, _expand_reduced(g, a.data.shape, axis, keepdims) / n)

    return _from_op(out, (a,), bwd)


def _extremum(a, axis, keepdims, fn):
    a = _as_tensor(a)
    ax = _normalize_axis(axis, a.data.ndim)
    out = fn(a.data, axis=ax, keepdims=keepdims)

    def bwd(g, push):
        hit = a.data == _expand_reduced(np.asarray(out), a.data.shape, ax, keepdims)
        ties = hit.sum(axis=ax, keepdims=True) if ax is not None else hit.sum()
        scaled = (g if keepdims or ax is None else np.expand_dims(g, ax)) / ties
        push(a, np.where(hit, scaled, 0.0))

    return _from_op(out, (a,), bwd)


def tmax(a, axis=None, keepdims: bool = False) -> Tensor:
    """Max reduction; ties share the gradient equally."""
    return _extremum(a, axis, keepdims, np.max)


def tmin(a, axis=None, keepdims: bool = False) -> Tensor:
    return _extremum(a, axis, keepdims, np.min)


def tstd(a, axis=None, keepdims: bool = False) -> Tensor:
    """Population standard deviation, exact forward, guarded at zero spread."""
    m = tmean(a, axis=axis, keepdims=True)
    centered = sub(a, m)
    var = tmean(mul(centered, centered), axis=axis, keepdims=keepdims)
    return sqrt(var)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat requires at least one tensor")
    axis = _normalize_axis(axis, tensors[0].data.ndim)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g, push):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if not t.requires_grad:
                continue
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            push(t, g[tuple(idx)])

    return _from_op(out, tuple(tensors), bwd)


def transpose(a, axes: tuple) -> Tensor:
    a = _as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = a.data.transpose(axes)

    def bwd(g, push):
        push(a, g.transpose(inverse))

    return _from_op(out, (a,), bwd)


def reshape(a, shape: tuple) -> Tensor:
    a = _as_tensor(a)
    out = a.data.reshape(shape)

    def bwd(g, push):
        push(a, g.reshape(a.data.shape))

    return _from_op(out, (a,), bwd)


def broadcast_to(a, shape: tuple) -> Tensor:
    """Explicit expansion to a larger shape; gradient sums back."""
    a = _as_tensor(a)
    shape = tuple(shape)
    _broadcast_shape(a.data.shape, shape)
    out = np.broadcast_to(a.data, shape)

    def bwd(g, push):
        push(a, _sum_to_shape(g, a.data.shape))

    return _from_op(out, (a,), bwd)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis; gradient scatters into zeros."""
    a = _as_tensor(a)
    axis = _normalize_axis(axis, a.data.ndim)
    if not 0 <= start <= start + length <= a.data.shape[axis]:
        raise ValueError(
            f"slice [{start}:{start + length}] outside axis {axis} of shape {a.data.shape}"
        )
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = a.data[idx]

    def bwd(g, push):
        full = np.zeros_like(a.data)
        full[idx] = g
        push(a, full)

    return _from_op(out, (a,), bwd)


# ---------------------------------------------------------------------------
# op registry for the finite-difference gradient suite
# ---------------------------------------------------------------------------


def _rand(rng, *shape):
    return rng.uniform(-2.0, 2.0, size=shape)


def _registry():
    # each entry: name -> (sample_inputs(rng) -> list[np.ndarray], apply(list[Tensor]) -> Tensor)
    ops = {
        "add": (lambda rng: [_rand(rng, 2, 3), _rand(rng, 2, 3)], lambda xs: add(xs[0], xs[1])),
        "add_broadcast": (lambda rng: [_rand(rng, 2, 3), _rand(rng, 3)], lambda xs: add(xs[0], xs[1])),
        "sub": (lambda rng: [_rand(rng, 2, 3), _rand(rng, 2, 3)], lambda xs: sub(xs[0], xs[1])),
        "mul": (lambda rng: [_rand(rng, 2, 3), _rand(rng, 2, 3)], lambda xs: mul(xs[0], xs[1])),
        "div": (
            lambda rng: [_rand(rng, 2, 3), rng.uniform(0.5, 2.0, size=(2, 3)) * np.where(rng.random((2, 3)) < 0.5, -1, 1)],
            lambda xs: div(xs[0], xs[1]),
        ),
        "neg": (lambda rng: [_rand(rng, 2, 3)], lambda xs: neg(xs[0])),
        "matmul": (lambda rng: [_rand(rng, 2, 3), _rand(rng, 3, 4)], lambda xs: matmul(xs[0], xs[1])),
        "matmul_batched": (
            lambda rng: [_rand(rng, 2, 2, 3), _rand(rng, 3, 4)],
            lambda xs: matmul(xs[0], xs[1]),
        ),
        "softmax": (lambda rng: [_rand(rng, 3, 4)], lambda xs: softmax(xs[0])),
        "log": (lambda rng: [rng.uniform(0.1, 2.0, size=(2, 3))], lambda xs: log(xs[0])),
        "exp": (lambda rng: [_rand(rng, 2, 3)], lambda xs: exp(xs[0])),
        "sqrt": (lambda rng: [rng.uniform(0.1, 2.0, size=(2, 3))], lambda xs: sqrt(xs[0])),
        "maximum": (lambda rng: [_rand(rng, 2, 3)], lambda xs: maximum(xs[0], 0.1)),
        "relu": (lambda rng: [_rand(rng, 2, 3)], lambda xs: relu(xs[0])),
        "sum": (lambda rng: [_rand(rng, 2, 3)], lambda xs: tsum(xs[0], axis=1)),
        "mean": (lambda rng: [_rand(rng, 2, 3)], lambda xs: tmean(xs[0], axis=0)),
        "max": (lambda rng: [_rand(rng, 2, 3)], lambda xs: tmax(xs[0], axis=1)),
        "min": (lambda rng: [_rand(rng, 2, 3)], lambda xs: tmin(xs[0], axis=1)),
        "std": (lambda rng: [_rand(rng, 4, 3)], lambda xs: tstd(xs[0], axis=0)),
        "concat": (
            lambda rng: [_rand(rng, 2, 3), _rand(rng, 2, 2)],
            lambda xs: concat(xs, axis=1),
        ),
        "transpose": (lambda rng: [_rand(rng, 2, 3, 4)], lambda xs: transpose(xs[0], (1, 0, 2))),
        "reshape": (lambda rng: [_rand(rng, 2, 6)], lambda xs: reshape(xs[0], (3, 4))),
        "broadcast_to": (
            lambda rng: [_rand(rng, 2, 1, 3)],
            lambda xs: broadcast_to(xs[0], (2, 4, 3)),
        ),
        "narrow": (lambda rng: [_rand(rng, 2, 5)], lambda xs: narrow(xs[0], 1, 1, 3)),
    }
    return ops


REGISTERED_OPS = _registry()
