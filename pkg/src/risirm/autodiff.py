"""Array-level reverse-mode differentiation with forward-mode tangents.

Every node records its parents, a vector-Jacobian rule written in terms of
differentiable :class:`Tensor` operations, and a Jacobian-vector rule on
plain arrays.  Because the reverse rules are themselves recorded when
``create_graph=True``, gradients can be differentiated again:

* reverse-over-reverse, used by training to differentiate an objective that
  contains a gradient norm;
* forward-over-reverse, used by :func:`hessian_vector_product`, which pushes a
  tangent through the recorded gradient graph.

Example
-------
>>> import numpy as np
>>> gradient(lambda w: (w * w).sum(), np.array([1.0, 2.0]))
array([2., 4.])
"""

from __future__ import annotations

import contextlib

import numpy as np

NORM_EPS = 1e-12

_state = {"record": True}


class DifferentiationError(FloatingPointError):
    pass


@contextlib.contextmanager
def recording(flag: bool):
    prev = _state["record"]
    _state["record"] = flag
    try:
        yield
    finally:
        _state["record"] = prev


class Tensor:
    __slots__ = ("value", "parents", "vjp", "jvp", "requires_grad", "__weakref__")

    __array_priority__ = 100

    def __init__(self, value, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=float)
        self.parents = ()
        self.vjp = None
        self.jvp = None
        self.requires_grad = requires_grad

    @property
    def tracked(self) -> bool:
        return self.requires_grad or bool(self.parents)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor({self.value!r})"

    def __add__(self, o):
        return add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return add(self, neg(_lift(o)))

    def __rsub__(self, o):
        return add(_lift(o), neg(self))

    def __mul__(self, o):
        return mul(self, o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(_lift(o), self)

    def __neg__(self):
        return neg(self)

    def sum(self, axis=None):
        return sum_(self, axis)

    def mean(self, axis=None):
        n = self.value.size if axis is None else self.value.shape[axis]
        return sum_(self, axis) * (1.0 / n)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(value, parents, vjp, jvp) -> Tensor:
    out = Tensor(value)
    if _state["record"] and any(p.tracked for p in parents):
        out.parents = parents
        out.vjp = vjp
        out.jvp = jvp
    return out


def _tsum(tangents, value_shape):
    acc = None
    for t in tangents:
        if t is None:
            continue
        acc = t if acc is None else acc + t
    return np.zeros(value_shape) if acc is None else np.broadcast_to(acc, value_shape)


def _reduce_to(a: np.ndarray, shape) -> np.ndarray:
    if a.shape == tuple(shape):
        return a
    lead = a.ndim - len(shape)
    a = a.sum(axis=tuple(range(lead))) if lead else a
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and a.shape[i] != 1)
    return a.sum(axis=axes, keepdims=True) if axes else a


# ---------------------------------------------------------------- primitives


def sum_to(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    if x.shape == shape:
        return x
    return _node(
        _reduce_to(x.value, shape), (x,),
        lambda g: (broadcast_to(g, x.shape),),
        lambda t: _reduce_to(t[0], shape),
    )


def broadcast_to(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    if x.shape == shape:
        return x
    return _node(
        np.broadcast_to(x.value, shape), (x,),
        lambda g: (sum_to(g, x.shape),),
        lambda t: np.broadcast_to(t[0], shape),
    )


def reshape(x: Tensor, shape) -> Tensor:
    x = _lift(x)
    old = x.shape
    return _node(
        x.value.reshape(shape), (x,),
        lambda g: (reshape(g, old),),
        lambda t: t[0].reshape(shape),
    )


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    v = a.value + b.value
    return _node(
        v, (a, b),
        lambda g: (sum_to(g, a.shape), sum_to(g, b.shape)),
        lambda t: _tsum(t, v.shape),
    )


def neg(a) -> Tensor:
    a = _lift(a)
    return _node(-a.value, (a,), lambda g: (neg(g),), lambda t: -t[0])


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    v = a.value * b.value

    def jvp(t):
        parts = []
        if t[0] is not None:
            parts.append(t[0] * b.value)
        if t[1] is not None:
            parts.append(a.value * t[1])
        return _tsum(parts, v.shape)

    return _node(
        v, (a, b),
        lambda g: (
            sum_to(g * b, a.shape) if a.tracked else None,
            sum_to(g * a, b.shape) if b.tracked else None,
        ),
        jvp,
    )


def div(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    v = a.value / b.value

    def jvp(t):
        parts = []
        if t[0] is not None:
            parts.append(t[0] / b.value)
        if t[1] is not None:
            parts.append(-a.value * t[1] / b.value ** 2)
        return _tsum(parts, v.shape)

    return _node(
        v, (a, b),
        lambda g: (sum_to(g / b, a.shape), sum_to(neg(g * a / (b * b)), b.shape)),
        jvp,
    )


def sum_(x: Tensor, axis=None) -> Tensor:
    x = _lift(x)
    kept = np.sum(x.value, axis=axis, keepdims=True)
    v = np.sum(x.value, axis=axis)
    return _node(
        v, (x,),
        lambda g: (broadcast_to(reshape(g, kept.shape), x.shape),),
        lambda t: np.sum(t[0], axis=axis),
    )


def tanh(x) -> Tensor:
    x = _lift(x)
    y = np.tanh(x.value)
    out = _node(y, (x,), None, lambda t: t[0] * (1.0 - y * y))
    if out.parents:
        out.vjp = lambda g: (g * (1.0 - out * out),)
    return out


def sin(x) -> Tensor:
    x = _lift(x)
    return _node(np.sin(x.value), (x,), lambda g: (g * cos(x),), lambda t: t[0] * np.cos(x.value))


def cos(x) -> Tensor:
    x = _lift(x)
    return _node(np.cos(x.value), (x,), lambda g: (neg(g * sin(x)),), lambda t: -t[0] * np.sin(x.value))


def clamp_min(x, floor: float) -> Tensor:
    """max(x, floor) with the gradient routed only where x > floor."""
    x = _lift(x)
    mask = (x.value > floor).astype(float)
    return _node(np.maximum(x.value, floor), (x,), lambda g: (g * mask,), lambda t: t[0] * mask)


def guarded_sqrt(s, eps: float = NORM_EPS) -> Tensor:
    """sqrt(s) whose derivative uses max(sqrt(s), eps) in the denominator.

    Applied to a squared norm this yields the guarded unit direction
    v / max(|v|, eps) on the reverse pass.
    """
    s = _lift(s)
    r = np.sqrt(s.value)
    out = _node(r, (s,), None, lambda t: 0.5 * t[0] / np.maximum(r, eps))
    if out.parents:
        out.vjp = lambda g: (g * 0.5 / clamp_min(out, eps),)
    return out


def slice1d(x: Tensor, start: int, stop: int) -> Tensor:
    n = x.shape[0]
    return _node(
        x.value[start:stop], (x,),
        lambda g: (embed1d(g, start, n),),
        lambda t: t[0][start:stop],
    )


def embed1d(x: Tensor, start: int, size: int) -> Tensor:
    stop = start + x.shape[0]
    v = np.zeros(size)
    v[start:stop] = x.value

    def jvp(t):
        z = np.zeros(size)
        z[start:stop] = t[0]
        return z

    return _node(v, (x,), lambda g: (slice1d(g, start, stop),), jvp)


def _einsum_terms(spec: str):
    spec = spec.replace(" ", "")
    ins, out = spec.split("->")
    a, b = ins.split(",")
    return a, b, out


def einsum(spec: str, a, b) -> Tensor:
    """Two-operand einsum without repeated indices inside one operand."""
    a, b = _lift(a), _lift(b)
    sa, sb, so = _einsum_terms(spec)
    for own, other in ((sa, sb), (sb, sa)):
        if len(set(own)) != len(own) or not set(own) <= set(so) | set(other):
            raise NotImplementedError(f"unsupported einsum pattern {spec!r}")
    v = np.einsum(spec, a.value, b.value)
    ga = f"{so},{sb}->{sa}"
    gb = f"{so},{sa}->{sb}"

    def jvp(t):
        parts = []
        if t[0] is not None:
            parts.append(np.einsum(spec, t[0], b.value))
        if t[1] is not None:
            parts.append(np.einsum(spec, a.value, t[1]))
        return _tsum(parts, v.shape)

    return _node(
        v, (a, b),
        lambda g: (einsum(ga, g, b) if a.tracked else None, einsum(gb, g, a) if b.tracked else None),
        jvp,
    )


# ------------------------------------------------------------ graph traversal


def _toposort(roots) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(r, False) for r in roots if r.tracked]
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
            if p.tracked and id(p) not in seen:
                stack.append((p, False))
    return order


def grad(output: Tensor, inputs, create_graph: bool = False, seed=None) -> list[Tensor]:
    """Reverse sweep from ``output``; returns one gradient Tensor per input."""
    inputs = list(inputs)
    wanted = {id(x) for x in inputs}
    order = _toposort([output])
    # only nodes with a path down to some input need a cotangent
    relevant = set()
    for node in order:
        if id(node) in wanted or any(id(p) in relevant for p in node.parents):
            relevant.add(id(node))
    with recording(create_graph):
        g0 = Tensor(np.ones_like(output.value) if seed is None else seed)
        grads: dict[int, Tensor] = {id(output): g0}
        for node in reversed(order):
            if id(node) not in relevant:
                continue
            g = grads.get(id(node)) if id(node) in wanted else grads.pop(id(node), None)
            if g is None or not node.parents:
                continue
            if not any(id(p) in relevant for p in node.parents):
                continue
            for p, gp in zip(node.parents, node.vjp(g)):
                if id(p) not in relevant or gp is None:
                    continue
                prev = grads.get(id(p))
                grads[id(p)] = gp if prev is None else add(prev, gp)
        out = []
        for x in inputs:
            g = grads.get(id(x))
            out.append(Tensor(np.zeros_like(x.value)) if g is None else g)
    return out


def tangents(outputs, seeds: dict) -> list[np.ndarray]:
    """Forward sweep: push ``seeds`` (Tensor -> tangent array) to ``outputs``."""
    known: dict[int, np.ndarray] = {id(k): np.asarray(v, dtype=float) for k, v in seeds.items()}
    for node in _toposort(outputs):
        if id(node) in known or not node.parents:
            continue
        ts = [known.get(id(p)) for p in node.parents]
        if all(t is None for t in ts):
            continue
        known[id(node)] = np.asarray(node.jvp(ts), dtype=float)
    return [known.get(id(o), np.zeros_like(o.value)) for o in outputs]


def _finite(arr, what: str):
    if not np.all(np.isfinite(arr)):
        raise DifferentiationError(f"numerical overflow in differentiation ({what})")
    return arr


# ------------------------------------------------------------------ public API


def value_and_gradient(objective, w):
    wt = Tensor(np.array(w, dtype=float), requires_grad=True)
    out = objective(wt)
    _finite(out.value, "objective value")
    (g,) = grad(out, [wt])
    return float(out.value), _finite(g.value.copy(), "gradient")


def gradient(objective, w) -> np.ndarray:
    return value_and_gradient(objective, w)[1]


def jvp(fn, w, v):
    """Forward-mode directional derivative of a (possibly vector) function."""
    wt = Tensor(np.array(w, dtype=float), requires_grad=True)
    out = fn(wt)
    (t,) = tangents([out], {wt: v})
    return _finite(out.value, "value"), _finite(t, "tangent")


def hessian_vector_product(objective, w, v) -> np.ndarray:
    """H(w) @ v by a tangent sweep through the recorded gradient graph."""
    wt = Tensor(np.array(w, dtype=float), requires_grad=True)
    out = objective(wt)
    _finite(out.value, "objective value")
    (g,) = grad(out, [wt], create_graph=True)
    (hv,) = tangents([g], {wt: np.asarray(v, dtype=float)})
    return _finite(hv, "hessian-vector product")
