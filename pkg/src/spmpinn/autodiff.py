"""Reverse-mode automatic differentiation over numpy arrays.

A Var wraps one ndarray and remembers how it was produced; backward() walks
the recorded graph once in reverse topological order and returns exact
gradients of a scalar root with respect to any requested Vars.

Besides scalar/elementwise/matrix primitives there is a family of fused "jet"
operations.  A jet is a single array of shape (k, N, w) whose leading axis
stacks the value of a quantity together with its derivatives with respect to
the scaled network inputs:

    k = 1: [value]          k = 2: [value, d/dx]      k = 4: [value, d/dt, d/dr, d2/dr2]

Propagating these channels forward through affine maps, activations, and
products needs only first/second/third derivatives of the scalar activation,
all of which have hand-written backward rules here.  Because the channels are
ordinary graph values, one reverse sweep then yields exact weight gradients of
losses that contain first and second input derivatives, with no nested tapes.
"""

from __future__ import annotations

import numpy as np

from .errors import NonFiniteGradient, ShapeMismatch

__all__ = [
    "Var", "constant", "backward",
    "matmul", "concat", "take_column", "reduce_mean_square", "reduce_sum",
    "tanh", "sigmoid", "exp", "log", "softplus", "power", "exp_clipped",
    "custom_unary",
    "jet_input", "jet_affine", "jet_activation", "jet_mul", "jet_expand",
    "jet_concat", "jet_channel",
]


class Var:
    """Node in the computation graph: an ndarray plus its provenance."""

    __slots__ = ("value", "parents", "vjp")

    def __init__(self, value, parents=(), vjp=None):
        self.value = value
        self.parents = parents
        self.vjp = vjp

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    # -- operators ---------------------------------------------------------

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

    def __pow__(self, exponent):
        return power(self, exponent)

    def __repr__(self):
        return f"Var(shape={np.shape(self.value)}, dtype={np.asarray(self.value).dtype})"


def constant(value, dtype=None) -> Var:
    return Var(np.asarray(value, dtype=dtype))


def _as_var(x, like: Var) -> Var:
    if isinstance(x, Var):
        return x
    return Var(np.asarray(x, dtype=like.value.dtype))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a, b) -> Var:
    a = a if isinstance(a, Var) else _as_var(a, b)
    b = _as_var(b, a)
    out = a.value + b.value

    def vjp(g):
        return _unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)

    return Var(out, (a, b), vjp)


def sub(a, b) -> Var:
    a = a if isinstance(a, Var) else _as_var(a, b)
    b = _as_var(b, a)
    out = a.value - b.value

    def vjp(g):
        return _unbroadcast(g, a.value.shape), _unbroadcast(-g, b.value.shape)

    return Var(out, (a, b), vjp)


def mul(a, b) -> Var:
    a = a if isinstance(a, Var) else _as_var(a, b)
    b = _as_var(b, a)
    out = a.value * b.value

    def vjp(g):
        return (_unbroadcast(g * b.value, a.value.shape),
                _unbroadcast(g * a.value, b.value.shape))

    return Var(out, (a, b), vjp)


def div(a, b) -> Var:
    a = a if isinstance(a, Var) else _as_var(a, b)
    b = _as_var(b, a)
    out = a.value / b.value

    def vjp(g):
        return (_unbroadcast(g / b.value, a.value.shape),
                _unbroadcast(-g * out / b.value, b.value.shape))

    return Var(out, (a, b), vjp)


def power(a: Var, exponent: float) -> Var:
    out = a.value ** exponent

    def vjp(g):
        return (g * exponent * a.value ** (exponent - 1.0),)

    return Var(out, (a,), vjp)


def exp(a: Var) -> Var:
    out = np.exp(a.value)

    def vjp(g):
        return (g * out,)

    return Var(out, (a,), vjp)


def exp_clipped(a: Var, bound: float, counter: list | None = None) -> Var:
    """exp with argument clipped to [-bound, bound]; clipped entries get zero gradient.

    If `counter` is given, counter[0] is incremented by the number of clipped entries.
    """
    clipped = np.abs(a.value) > bound
    n_clip = int(np.count_nonzero(clipped))
    if counter is not None and n_clip:
        counter[0] += n_clip
    out = np.exp(np.clip(a.value, -bound, bound))

    def vjp(g):
        return (np.where(clipped, 0.0, g * out),)

    return Var(out, (a,), vjp)


def log(a: Var) -> Var:
    out = np.log(a.value)

    def vjp(g):
        return (g / a.value,)

    return Var(out, (a,), vjp)


def tanh(a: Var) -> Var:
    out = np.tanh(a.value)

    def vjp(g):
        return (g * (1.0 - out * out),)

    return Var(out, (a,), vjp)


def sigmoid(a: Var) -> Var:
    out = _sigmoid_value(a.value)

    def vjp(g):
        return (g * out * (1.0 - out),)

    return Var(out, (a,), vjp)


def softplus(a: Var) -> Var:
    # stable: log(1 + e^x) = max(x, 0) + log1p(e^{-|x|})
    out = np.maximum(a.value, 0.0) + np.log1p(np.exp(-np.abs(a.value)))
    s = _sigmoid_value(a.value)

    def vjp(g):
        return (g * s,)

    return Var(out, (a,), vjp)


def custom_unary(a: Var, fn, dfn) -> Var:
    """Elementwise function given by value/derivative callables (e.g. a spline)."""
    out = np.asarray(fn(a.value), dtype=a.value.dtype)
    slope = np.asarray(dfn(a.value), dtype=a.value.dtype)

    def vjp(g):
        return (g * slope,)

    return Var(out, (a,), vjp)


def matmul(a: Var, b: Var) -> Var:
    if a.value.shape[-1] != b.value.shape[0]:
        raise ShapeMismatch(f"matmul {a.value.shape} @ {b.value.shape}")
    out = a.value @ b.value

    def vjp(g):
        return (g @ b.value.T, a.value.T @ g)

    return Var(out, (a, b), vjp)


def concat(parts: list[Var], axis: int = -1) -> Var:
    out = np.concatenate([p.value for p in parts], axis=axis)
    sizes = [p.value.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return Var(out, tuple(parts), vjp)


def take_column(a: Var, idx: int) -> Var:
    """Column idx of a (..., w) array, keeping the last axis with size 1."""
    out = a.value[..., idx:idx + 1]

    def vjp(g):
        full = np.zeros_like(a.value)
        full[..., idx:idx + 1] = g
        return (full,)

    return Var(out, (a,), vjp)


def reduce_sum(a: Var) -> Var:
    out = np.asarray(a.value.sum())

    def vjp(g):
        return (np.broadcast_to(g, a.value.shape).copy(),)

    return Var(out, (a,), vjp)


def reduce_mean_square(a: Var) -> Var:
    """Mean of squared entries, the ||.||^2 used by every loss term."""
    n = a.value.size
    out = np.asarray(np.vdot(a.value, a.value) / n, dtype=a.value.dtype)

    def vjp(g):
        return (g * (2.0 / n) * a.value,)

    return Var(out, (a,), vjp)


def _sigmoid_value(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# -- backward pass ---------------------------------------------------------


def backward(root: Var, wrt: list[Var], check_finite: bool = True) -> list[np.ndarray]:
    """Gradients of scalar `root` with respect to each Var in `wrt`."""
    if np.ndim(root.value) != 0:
        raise ShapeMismatch("backward root must be scalar")
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))

    wrt_ids = {id(w) for w in wrt}
    kept: dict[int, np.ndarray] = {}
    grads: dict[int, np.ndarray] = {
        id(root): np.asarray(1.0, dtype=np.asarray(root.value).dtype)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if id(node) in wrt_ids:
            kept[id(node)] = g
        if node.vjp is None:
            continue
        for p, pg in zip(node.parents, node.vjp(g)):
            if pg is None:
                continue
            acc = grads.get(id(p))
            grads[id(p)] = pg if acc is None else acc + pg

    out = []
    for w in wrt:
        g = kept.get(id(w))
        if g is None:
            g = np.zeros_like(w.value)
        out.append(np.asarray(g))
    if check_finite and any(not np.all(np.isfinite(g)) for g in out):
        raise NonFiniteGradient("backward pass produced non-finite gradients")
    return out


# -- fused jet operations --------------------------------------------------


def jet_input(columns: np.ndarray, dtype) -> Var:
    """Leaf jet from a prebuilt (k, N, w) channel stack."""
    return Var(np.asarray(columns, dtype=dtype))


def jet_affine(x: Var, w: Var, b: Var) -> Var:
    """(k, N, i) @ (i, o) + bias on the value channel only."""
    k, n, i = x.value.shape
    if w.value.shape[0] != i:
        raise ShapeMismatch(f"jet_affine {x.value.shape} @ {w.value.shape}")
    o = w.value.shape[1]
    out = (x.value.reshape(k * n, i) @ w.value).reshape(k, n, o)
    out[0] += b.value

    def vjp(g):
        g2 = g.reshape(k * n, o)
        gx = (g2 @ w.value.T).reshape(k, n, i)
        gw = x.value.reshape(k * n, i).T @ g2
        gb = g[0].sum(axis=0)
        return gx, gw, gb

    return Var(out, (x, w, b), vjp)


_ACT = {
    "tanh": (
        np.tanh,
        lambda v: 1.0 - v * v,             # f'  in terms of the value v
        lambda v, s: -2.0 * v * s,         # f''
        lambda v, s: -2.0 * s * (s - 2.0 * v * v),  # f'''
    ),
    "sigmoid": (
        _sigmoid_value,
        lambda v: v * (1.0 - v),
        lambda v, s: s * (1.0 - 2.0 * v),
        lambda v, s: s * (1.0 - 2.0 * v) ** 2 - 2.0 * s * s,
    ),
}


def jet_activation(x: Var, kind: str) -> Var:
    """Elementwise activation with exact chain rule on all channels.

    value' = f(z); first-derivative channels scale by f'(z); the second-radial
    channel picks up f''(z) (dr)^2; the backward rule additionally needs f'''.
    """
    fn, d1, d2, d3 = _ACT[kind]
    k = x.value.shape[0]
    z = x.value
    v = fn(z[0])
    s = d1(v)
    out = np.empty_like(z)
    out[0] = v
    if k >= 2:
        out[1] = s * z[1]
    if k == 4:
        f2 = d2(v, s)
        out[2] = s * z[2]
        out[3] = s * z[3] + f2 * z[2] * z[2]

    def vjp(g):
        gx = np.empty_like(z)
        if k == 1:
            gx[0] = g[0] * s
            return (gx,)
        f2 = d2(v, s)
        if k == 2:
            gx[0] = g[0] * s + g[1] * z[1] * f2
            gx[1] = g[1] * s
            return (gx,)
        f3 = d3(v, s)
        gx[0] = (g[0] * s + (g[1] * z[1] + g[2] * z[2] + g[3] * z[3]) * f2
                 + g[3] * z[2] * z[2] * f3)
        gx[1] = g[1] * s
        gx[2] = g[2] * s + g[3] * 2.0 * z[2] * f2
        gx[3] = g[3] * s
        return (gx,)

    return Var(out, (x,), vjp)


def jet_mul(a: Var, b: Var) -> Var:
    """Elementwise product with the product rule applied across channels."""
    k = a.value.shape[0]
    av, bv = a.value, b.value
    out = np.empty(np.broadcast_shapes(av.shape, bv.shape), dtype=av.dtype)
    out[0] = av[0] * bv[0]
    if k >= 2:
        out[1] = av[0] * bv[1] + av[1] * bv[0]
    if k == 4:
        out[2] = av[0] * bv[2] + av[2] * bv[0]
        out[3] = av[0] * bv[3] + 2.0 * av[2] * bv[2] + av[3] * bv[0]

    def vjp(g):
        ga = np.empty_like(out)
        gb = np.empty_like(out)
        if k == 1:
            ga[0] = g[0] * bv[0]
            gb[0] = g[0] * av[0]
        elif k == 2:
            ga[0] = g[0] * bv[0] + g[1] * bv[1]
            ga[1] = g[1] * bv[0]
            gb[0] = g[0] * av[0] + g[1] * av[1]
            gb[1] = g[1] * av[0]
        else:
            ga[0] = g[0] * bv[0] + g[1] * bv[1] + g[2] * bv[2] + g[3] * bv[3]
            ga[1] = g[1] * bv[0]
            ga[2] = g[2] * bv[0] + g[3] * 2.0 * bv[2]
            ga[3] = g[3] * bv[0]
            gb[0] = g[0] * av[0] + g[1] * av[1] + g[2] * av[2] + g[3] * av[3]
            gb[1] = g[1] * av[0]
            gb[2] = g[2] * av[0] + g[3] * 2.0 * av[2]
            gb[3] = g[3] * av[0]
        return _unbroadcast(ga, av.shape), _unbroadcast(gb, bv.shape)

    return Var(out, (a, b), vjp)


def jet_expand(x: Var, k_out: int) -> Var:
    """Append zero derivative channels (e.g. t-only features entering an (t, r) path)."""
    k, n, w = x.value.shape
    if k_out < k:
        raise ShapeMismatch("jet_expand cannot drop channels")
    out = np.zeros((k_out, n, w), dtype=x.value.dtype)
    out[:k] = x.value

    def vjp(g):
        return (g[:k],)

    return Var(out, (x,), vjp)


def jet_concat(a: Var, b: Var) -> Var:
    """Concatenate two jets along the feature axis."""
    if a.value.shape[0] != b.value.shape[0]:
        raise ShapeMismatch("jet_concat needs matching channel counts")
    wa = a.value.shape[2]
    out = np.concatenate([a.value, b.value], axis=2)

    def vjp(g):
        return g[:, :, :wa], g[:, :, wa:]

    return Var(out, (a, b), vjp)


def jet_channel(x: Var, idx: int) -> Var:
    """Extract one channel as a plain (N, w) Var."""
    out = x.value[idx]

    def vjp(g):
        full = np.zeros_like(x.value)
        full[idx] = g
        return (full,)

    return Var(out, (x,), vjp)
