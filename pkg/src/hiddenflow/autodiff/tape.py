"""Reverse-mode differentiation over numpy arrays.

A :class:`Tape` records elementary operations in execution order.  Every
recorded node keeps its operation kind, the indices of its inputs and any
static attributes, so the same topology can be replayed with fresh leaf
values (``Tape.replay``) without re-tracing the Python program that built it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from hiddenflow.errors import ContractError, NonFiniteError, UnsupportedOperation


# --------------------------------------------------------------------------
# operation registry
# --------------------------------------------------------------------------

# forward(values, attrs) -> value
# backward(g, values, out, attrs, needs) -> tuple of input grads (None when not needed)
_FORWARD: dict[str, Callable] = {}
_BACKWARD: dict[str, Callable] = {}


def register_op(name: str, forward: Callable, backward: Callable) -> None:
    """Add an elementary operation.

    ``forward(values, attrs)`` returns the node value; ``backward(g, values,
    out, attrs, needs)`` returns one adjoint per input (``None`` where
    ``needs`` is false).  Used for fused kernels outside this module.
    """
    _FORWARD[name] = forward
    _BACKWARD[name] = backward


_register = register_op


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _shape(x) -> tuple:
    return np.shape(x)


def _add_bwd(g, vals, out, attrs, needs):
    a, b = vals
    return (
        _unbroadcast(g, _shape(a)) if needs[0] else None,
        _unbroadcast(g, _shape(b)) if needs[1] else None,
    )


def _sub_bwd(g, vals, out, attrs, needs):
    a, b = vals
    return (
        _unbroadcast(g, _shape(a)) if needs[0] else None,
        _unbroadcast(-g, _shape(b)) if needs[1] else None,
    )


def _mul_bwd(g, vals, out, attrs, needs):
    a, b = vals
    return (
        _unbroadcast(g * b, _shape(a)) if needs[0] else None,
        _unbroadcast(g * a, _shape(b)) if needs[1] else None,
    )


def _div_bwd(g, vals, out, attrs, needs):
    a, b = vals
    ga = g / b
    return (
        _unbroadcast(ga, _shape(a)) if needs[0] else None,
        _unbroadcast(-ga * out, _shape(b)) if needs[1] else None,
    )


def _matmul_bwd(g, vals, out, attrs, needs):
    a, w = vals
    a = np.asarray(a)
    w = np.asarray(w)
    if w.ndim != 2:
        raise UnsupportedOperation("matmul backward needs a 2-D right operand")
    ga = gw = None
    if needs[0]:
        ga = _unbroadcast(g @ w.T, a.shape)
    if needs[1]:
        ab = np.broadcast_to(a, g.shape[:-1] + (a.shape[-1],))
        gw = ab.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
    return ga, gw


def _pow_fwd(vals, attrs):
    return vals[0] ** attrs["exponent"]


def _pow_bwd(g, vals, out, attrs, needs):
    k = attrs["exponent"]
    if k == 2:
        return (2.0 * g * vals[0],)
    return (g * k * vals[0] ** (k - 1),)


def _sum_fwd(vals, attrs):
    return np.sum(vals[0], axis=attrs.get("axis"))


def _sum_bwd(g, vals, out, attrs, needs):
    shape = _shape(vals[0])
    axis = attrs.get("axis")
    if axis is not None:
        g = np.expand_dims(g, axis)
    return (np.broadcast_to(g, shape),)


def _mean_fwd(vals, attrs):
    return np.mean(vals[0], axis=attrs.get("axis"))


def _mean_bwd(g, vals, out, attrs, needs):
    shape = _shape(vals[0])
    axis = attrs.get("axis")
    n = np.prod(shape) if axis is None else shape[axis]
    if axis is not None:
        g = np.expand_dims(g, axis)
    return (np.broadcast_to(g / n, shape),)


def _getitem_bwd(g, vals, out, attrs, needs):
    full = np.zeros(_shape(vals[0]))
    if attrs.get("fancy"):
        np.add.at(full, attrs["index"], g)
    else:
        full[attrs["index"]] = g
    return (full,)


_register("add", lambda v, a: v[0] + v[1], _add_bwd)
_register("sub", lambda v, a: v[0] - v[1], _sub_bwd)
_register("mul", lambda v, a: v[0] * v[1], _mul_bwd)
_register("div", lambda v, a: v[0] / v[1], _div_bwd)
_register("neg", lambda v, a: -v[0], lambda g, v, o, a, n: (-g,))
_register("matmul", lambda v, a: v[0] @ v[1], _matmul_bwd)


def _sin_bwd(g, vals, out, attrs, needs):
    cos = attrs["_partner_value"] if "_partner_value" in attrs else np.cos(vals[0])
    return (g * cos,)


def _cos_bwd(g, vals, out, attrs, needs):
    sin = attrs["_partner_value"] if "_partner_value" in attrs else np.sin(vals[0])
    return (-g * sin,)


_register("sin", lambda v, a: np.sin(v[0]), _sin_bwd)
_register("cos", lambda v, a: np.cos(v[0]), _cos_bwd)
_register("exp", lambda v, a: np.exp(v[0]), lambda g, v, o, a, n: (g * o,))
_register("tanh", lambda v, a: np.tanh(v[0]), lambda g, v, o, a, n: (g * (1.0 - o * o),))
_register("pow", _pow_fwd, _pow_bwd)
_register("sum", _sum_fwd, _sum_bwd)
_register("mean", _mean_fwd, _mean_bwd)
_register("getitem", lambda v, a: v[0][a["index"]], _getitem_bwd)
_register("reshape", lambda v, a: np.reshape(v[0], a["shape"]),
          lambda g, v, o, a, n: (np.reshape(g, _shape(v[0])),))

SUPPORTED_OPS = frozenset(_FORWARD)


# --------------------------------------------------------------------------
# tape and variables
# --------------------------------------------------------------------------

@dataclass
class Node:
    op: str
    inputs: tuple[int, ...]
    attrs: dict = field(default_factory=dict)
    requires_grad: bool = False


class Var:
    """Handle to one node of a :class:`Tape`."""

    __slots__ = ("tape", "index")
    # numpy must defer to our reflected operators instead of broadcasting
    # over an object array
    __array_ufunc__ = None

    def __init__(self, tape: "Tape", index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self):
        return self.tape.values[self.index]

    @property
    def shape(self) -> tuple:
        return _shape(self.value)

    def __repr__(self) -> str:
        node = self.tape.nodes[self.index]
        return f"Var(#{self.index} {node.op}, shape={self.shape})"

    def _bin(self, op, other, swap=False):
        other = self.tape.lift(other)
        a, b = (other, self) if swap else (self, other)
        return self.tape.apply(op, a, b)

    def __add__(self, o):
        return self._bin("add", o)

    def __radd__(self, o):
        return self._bin("add", o, swap=True)

    def __sub__(self, o):
        return self._bin("sub", o)

    def __rsub__(self, o):
        return self._bin("sub", o, swap=True)

    def __mul__(self, o):
        return self._bin("mul", o)

    def __rmul__(self, o):
        return self._bin("mul", o, swap=True)

    def __truediv__(self, o):
        return self._bin("div", o)

    def __rtruediv__(self, o):
        return self._bin("div", o, swap=True)

    def __matmul__(self, o):
        return self._bin("matmul", o)

    def __rmatmul__(self, o):
        return self._bin("matmul", o, swap=True)

    def __neg__(self):
        return self.tape.apply("neg", self)

    def __pow__(self, k):
        if isinstance(k, Var) or not np.isscalar(k):
            raise UnsupportedOperation("only constant scalar exponents are supported")
        return self.tape.apply("pow", self, exponent=float(k) if k != int(k) else int(k))

    def __getitem__(self, index):
        fancy = _is_fancy(index)
        return self.tape.apply("getitem", self, index=index, fancy=fancy)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return self.tape.apply("reshape", self, shape=shape)

    def sum(self, axis=None):
        return self.tape.apply("sum", self, axis=axis)

    def mean(self, axis=None):
        return self.tape.apply("mean", self, axis=axis)

    def __bool__(self):
        raise UnsupportedOperation("data-dependent control flow on a traced value")


def _as_value(value):
    return np.float64(value) if np.isscalar(value) else np.asarray(value, dtype=float)


def _is_fancy(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


class Tape:
    """Single-writer record of elementary operations."""

    def __init__(self, check_finite: bool = False):
        self.nodes: list[Node] = []
        self.values: list[Any] = []
        self.check_finite = check_finite

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def variable_count(self) -> int:
        return len(self.nodes)

    def _push(self, node: Node, value) -> Var:
        if self.check_finite and not np.all(np.isfinite(value)):
            raise NonFiniteError(len(self.nodes), node.op)
        self.nodes.append(node)
        self.values.append(value)
        return Var(self, len(self.nodes) - 1)

    def leaf(self, value, requires_grad: bool = True) -> Var:
        """Register an input whose value may change between replays."""
        value = _as_value(value)
        return self._push(Node("leaf", (), {}, requires_grad), value)

    def const(self, value) -> Var:
        value = _as_value(value)
        return self._push(Node("const", ()), value)

    def lift(self, x) -> Var:
        if isinstance(x, Var):
            if x.tape is not self:
                raise ContractError("value belongs to a different tape")
            return x
        return self.const(x)

    def apply(self, op: str, *args, **attrs) -> Var:
        if op not in _FORWARD:
            raise UnsupportedOperation(f"unsupported elementary operation {op!r}")
        inputs = tuple(self.lift(a) for a in args)
        idx = tuple(v.index for v in inputs)
        value = _FORWARD[op]([self.values[i] for i in idx], attrs)
        requires = any(self.nodes[i].requires_grad for i in idx)
        return self._push(Node(op, idx, attrs, requires), value)

    def link(self, a: Var, b: Var) -> None:
        """Let the backward rules of ``a`` and ``b`` read each other's value.

        Used for sin/cos of the same argument, whose derivatives are each other.
        """
        self.nodes[a.index].attrs["partner"] = b.index
        self.nodes[b.index].attrs["partner"] = a.index

    # -- replay --------------------------------------------------------------

    def replay(self, leaves: dict[Var, Any] | Sequence[tuple[Var, Any]]) -> None:
        """Recompute every node in recorded order with new leaf values."""
        items = leaves.items() if isinstance(leaves, dict) else leaves
        for var, value in items:
            if self.nodes[var.index].op != "leaf":
                raise ContractError(f"node #{var.index} is not a leaf")
            self.values[var.index] = _as_value(value)
        values = self.values
        for i, node in enumerate(self.nodes):
            if node.op in ("leaf", "const"):
                continue
            out = _FORWARD[node.op]([values[j] for j in node.inputs], node.attrs)
            if self.check_finite and not np.all(np.isfinite(out)):
                raise NonFiniteError(i, node.op)
            values[i] = out

    # -- reverse sweep -------------------------------------------------------

    def backward(self, output: Var) -> list:
        """Adjoints of ``output`` for every leaf (None where it does not depend)."""
        if output.tape is not self:
            raise ContractError("output was recorded on a different tape")
        if np.size(self.values[output.index]) != 1:
            raise ContractError("reverse sweep needs a scalar output")
        grads: list = [None] * len(self.nodes)
        grads[output.index] = np.ones_like(self.values[output.index], dtype=float)
        values = self.values
        for i in range(output.index, -1, -1):
            g = grads[i]
            if g is None:
                continue
            node = self.nodes[i]
            if not node.inputs:
                continue
            needs = [self.nodes[j].requires_grad for j in node.inputs]
            if not any(needs):
                continue
            attrs = node.attrs
            if "partner" in attrs:
                attrs = dict(attrs, _partner_value=values[attrs["partner"]])
            in_grads = _BACKWARD[node.op](
                g, [values[j] for j in node.inputs], values[i], attrs, needs
            )
            grads[i] = None  # interior adjoints are not returned; free them early
            for j, gj, need in zip(node.inputs, in_grads, needs):
                if not need or gj is None:
                    continue
                grads[j] = gj if grads[j] is None else grads[j] + gj
        return grads


@dataclass
class GradientResult:
    loss: float
    gradient: np.ndarray


def reverse_gradient(tape: Tape, output: Var, parameters: Sequence[Var]) -> GradientResult:
    """Gradient of a scalar ``output`` with respect to ``parameters``.

    The result is one flat vector, parameters concatenated in the given order
    and each raveled in C order.  Parameters that do not influence the output
    receive exact zeros.
    """
    for p in parameters:
        if p.tape is not tape:
            raise ContractError(f"parameter {p!r} is not tracked by this tape")
        if tape.nodes[p.index].op != "leaf" or not tape.nodes[p.index].requires_grad:
            raise ContractError(f"node #{p.index} is not a tracked leaf")
    grads = tape.backward(output)
    parts = []
    for p in parameters:
        g = grads[p.index]
        parts.append(np.zeros(np.size(p.value)) if g is None else np.ravel(g))
    flat = np.concatenate(parts) if parts else np.zeros(0)
    return GradientResult(float(np.ravel(output.value)[0]), flat)
