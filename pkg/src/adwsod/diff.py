"""Reverse-mode differentiation over a fixed set of array primitives, plus Adam.

The tape records every node in creation order, which is already a
topological order; ``backward`` walks it once in reverse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

LOG_CLAMP = 1e-12
_LOG_2PI = math.log(2.0 * math.pi)


class Node:
    __slots__ = ("tape", "value", "parents", "grad_fn", "name", "index")
    __array_ufunc__ = None  # make numpy defer to the reflected operators

    def __init__(self, tape, value, parents=(), grad_fn=None, name=None):
        self.tape = tape
        self.value = value
        self.parents = parents
        self.grad_fn = grad_fn
        self.name = name
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

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

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, idx):
        return take(self, idx)

    def __repr__(self):
        return f"Node({self.name or self.index}, shape={self.value.shape})"


class Tape:
    def __init__(self):
        self.nodes: list[Node] = []
        self.params: dict[str, Node] = {}

    def param(self, name: str, value) -> Node:
        if name in self.params:
            raise KeyError(f"parameter {name!r} registered twice")
        node = Node(self, np.asarray(value, dtype=float), name=name)
        self.params[name] = node
        return node

    def const(self, value) -> Node:
        return Node(self, np.asarray(value, dtype=float))


def _lift(tape: Tape, x) -> Node:
    return x if isinstance(x, Node) else tape.const(x)


def _tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Node):
            return x.tape
    raise TypeError("at least one operand must be a Node")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _binary(a, b, value, ga, gb):
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    sa, sb = a.value.shape, b.value.shape
    return Node(
        tape,
        value(a.value, b.value),
        (a, b),
        lambda g: (_unbroadcast(ga(g, a.value, b.value), sa), _unbroadcast(gb(g, a.value, b.value), sb)),
    )


def add(a, b) -> Node:
    return _binary(a, b, np.add, lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b) -> Node:
    return _binary(a, b, np.subtract, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b) -> Node:
    return _binary(a, b, np.multiply, lambda g, x, y: g * y, lambda g, x, y: g * x)


def div(a, b) -> Node:
    return _binary(a, b, np.divide, lambda g, x, y: g / y, lambda g, x, y: -g * x / (y * y))


def matmul(a, b) -> Node:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    x, y = a.value, b.value

    def grad(g):
        if x.ndim == 1 and y.ndim == 1:
            return g * y, g * x
        if x.ndim == 1:
            return y @ g, np.outer(x, g)
        if y.ndim == 1:
            return np.outer(g, y), x.T @ g
        return g @ y.T, x.T @ g

    return Node(tape, x @ y, (a, b), grad)


def relu(a: Node) -> Node:
    mask = a.value > 0.0  # subgradient 0 at the kink
    return Node(a.tape, np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def exp(a: Node) -> Node:
    out = np.exp(a.value)
    return Node(a.tape, out, (a,), lambda g: (g * out,))


def log(a: Node, clamp: float = LOG_CLAMP) -> Node:
    """log(max(a, clamp)); zero gradient inside the clamped region."""
    x = a.value
    live = x > clamp
    safe = np.where(live, x, clamp)
    return Node(a.tape, np.log(safe), (a,), lambda g: (np.where(live, g / safe, 0.0),))


def sigmoid(a: Node) -> Node:
    out = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return Node(a.tape, out, (a,), lambda g: (g * out * (1.0 - out),))


def softmax(a: Node, axis: int = -1) -> Node:
    x = a.value
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    out = e / e.sum(axis=axis, keepdims=True)

    def grad(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Node(a.tape, out, (a,), grad)


def sum(a: Node, axis=None) -> Node:  # noqa: A001 - mirrors numpy naming
    shape = a.value.shape

    def grad(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return Node(a.tape, a.value.sum(axis=axis), (a,), grad)


def mean(a: Node, axis=None) -> Node:
    n = a.value.size if axis is None else a.value.shape[axis]
    return mul(sum(a, axis=axis), 1.0 / n)


def reshape(a: Node, shape) -> Node:
    old = a.value.shape
    return Node(a.tape, a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a: Node) -> Node:
    return Node(a.tape, a.value.T, (a,), lambda g: (g.T,))


def take(a: Node, idx) -> Node:
    """Basic/advanced indexing; gradient scatters back with accumulation."""
    shape = a.value.shape

    def grad(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return Node(a.tape, a.value[idx], (a,), grad)


def gather_or_zero(a: Node, idx: np.ndarray) -> Node:
    """a[..., idx] along the last axis, yielding 0 where idx < 0."""
    idx = np.asarray(idx)
    valid = idx >= 0
    safe = np.where(valid, idx, 0)
    lead = np.indices(safe.shape[:-1]) if a.value.ndim > 1 else ()
    if a.value.ndim > 1:
        key = tuple(np.broadcast_to(l[..., None], safe.shape) for l in lead) + (safe,)
    else:
        key = (safe,)
    shape = a.value.shape

    def grad(g):
        out = np.zeros(shape)
        np.add.at(out, key, np.where(valid, g, 0.0))
        return (out,)

    return Node(a.tape, np.where(valid, a.value[key], 0.0), (a,), grad)


def stack(nodes: list[Node], axis: int = 0) -> Node:
    tape = nodes[0].tape

    def grad(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(nodes)))

    return Node(tape, np.stack([n.value for n in nodes], axis=axis), tuple(nodes), grad)


def gaussian_logpdf(offsets: Node, mu: Node, log_sigma: Node) -> Node:
    """Diagonal 2-D normal log-density.

    offsets: (A, R, 2); mu, log_sigma: (A, 2). Returns (A, R).
    """
    sigma = np.exp(log_sigma.value)[:, None, :]
    z = (offsets.value - mu.value[:, None, :]) / sigma
    out = -0.5 * (z * z).sum(-1) - log_sigma.value.sum(-1)[:, None] - _LOG_2PI

    def grad(g):
        g3 = g[..., None]
        g_off = -g3 * z / sigma
        return g_off, -g_off.sum(axis=1), (g3 * (z * z - 1.0)).sum(axis=1)

    return Node(offsets.tape, out, (offsets, mu, log_sigma), grad)


def backward(tape: Tape, loss: Node) -> dict[str, np.ndarray]:
    """Gradients of scalar ``loss`` w.r.t. every registered parameter."""
    if loss.value.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.value.shape}")
    grads: list[Optional[np.ndarray]] = [None] * len(tape.nodes)
    grads[loss.index] = np.ones_like(loss.value)
    for node in reversed(tape.nodes[: loss.index + 1]):
        g = grads[node.index]
        if g is None or node.grad_fn is None:
            continue
        for parent, pg in zip(node.parents, node.grad_fn(g)):
            if grads[parent.index] is None:
                grads[parent.index] = pg
            else:
                grads[parent.index] = grads[parent.index] + pg
    out = {}
    for name, node in tape.params.items():
        g = grads[node.index]
        out[name] = np.zeros_like(node.value) if g is None else np.asarray(g, dtype=float).reshape(node.value.shape)
    return out


LossFn = Callable[[Tape, Mapping[str, Node]], Node]


def evaluate(f: LossFn, params: Mapping[str, np.ndarray]) -> tuple[float, dict[str, np.ndarray]]:
    tape = Tape()
    nodes = {k: tape.param(k, v) for k, v in params.items()}
    loss = f(tape, nodes)
    return float(loss.value), backward(tape, loss)


def value_of(f: LossFn, params: Mapping[str, np.ndarray]) -> float:
    tape = Tape()
    return float(f(tape, {k: tape.param(k, v) for k, v in params.items()}).value)


def grad_check_groups(
    f: LossFn,
    params: Mapping[str, np.ndarray],
    h: float = 1e-5,
    names: Optional[Sequence[str]] = None,
) -> dict[str, float]:
    """Per-parameter max of |analytic - central difference| / max(1, |analytic|).

    ``names`` restricts which parameters are perturbed; all of them by default.
    """
    params = {k: np.array(v, dtype=float) for k, v in params.items()}
    _, analytic = evaluate(f, params)
    errors = {}
    for name in params if names is None else names:
        value = params[name]
        worst = 0.0
        flat = value.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = value_of(f, params)
            flat[i] = orig - h
            down = value_of(f, params)
            flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            a = analytic[name].reshape(-1)[i]
            worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
        errors[name] = worst
    return errors


def grad_check(f: LossFn, params: Mapping[str, np.ndarray], h: float = 1e-5) -> float:
    errs = grad_check_groups(f, params, h)
    return max(errs.values()) if errs else 0.0


class NaNGradientError(FloatingPointError):
    pass


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
    """Bias-corrected Adam update, in place on ``params`` and ``state``.

    A non-finite gradient raises before anything is modified.
    """
    for name in params:
        g = grads[name]
        if g.shape != params[name].shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {params[name].shape} for {name}")
        if not np.all(np.isfinite(g)):
            raise NaNGradientError(f"non-finite gradient for {name}")
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
