"""Hyper-dual numbers: exact first and second derivatives by forward propagation.

A hyper-dual number carries ``(value, d_a, d_b, d_ab)``: the value of an
expression, its derivatives along two seed directions ``a`` and ``b`` and the
mixed second derivative along ``a`` then ``b``.  Components may be floats,
numpy arrays or :class:`~hiddenflow.autodiff.tape.Var` handles, so the same
arithmetic runs eagerly or while being recorded on a tape for a later reverse
sweep.

When both seeds coincide the two first-derivative components are the *same
object*; operations detect this and compute the shared component once.
Python scalar zeros are treated as structural zeros and never materialised.
"""

from __future__ import annotations

import numpy as np

from hiddenflow.autodiff.tape import Var
from hiddenflow.errors import UnsupportedOperation


def _is_zero(x) -> bool:
    return type(x) in (int, float) and x == 0


def _add(x, y):
    if _is_zero(x):
        return y
    if _is_zero(y):
        return x
    return x + y


def _sub(x, y):
    if _is_zero(y):
        return x
    if _is_zero(x):
        return -y
    return x - y


def _mul(x, y):
    if _is_zero(x) or _is_zero(y):
        return 0.0
    return x * y


def _neg(x):
    return 0.0 if _is_zero(x) else -x


def _matmul(x, w):
    if _is_zero(x):
        return 0.0
    return x @ w


class HyperDual:
    __slots__ = ("value", "d_a", "d_b", "d_ab")
    __array_ufunc__ = None

    def __init__(self, value, d_a=0.0, d_b=0.0, d_ab=0.0):
        self.value = value
        self.d_a = d_a
        self.d_b = d_b
        self.d_ab = d_ab

    @classmethod
    def diagonal(cls, value, d=0.0, d2=0.0) -> "HyperDual":
        """Seed with a == b: ``d_a`` and ``d_b`` share one component."""
        return cls(value, d, d, d2)

    @property
    def is_diagonal(self) -> bool:
        return self.d_a is self.d_b

    def __repr__(self) -> str:
        return f"HyperDual({self.value!r}, {self.d_a!r}, {self.d_b!r}, {self.d_ab!r})"

    def astuple(self) -> tuple:
        return (self.value, self.d_a, self.d_b, self.d_ab)

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, HyperDual):
            return HyperDual(self.value + other, self.d_a, self.d_b, self.d_ab)
        d_a = _add(self.d_a, other.d_a)
        d_b = d_a if (self.is_diagonal and other.is_diagonal) else _add(self.d_b, other.d_b)
        return HyperDual(self.value + other.value, d_a, d_b, _add(self.d_ab, other.d_ab))

    __radd__ = __add__

    def __neg__(self):
        d_a = _neg(self.d_a)
        d_b = d_a if self.is_diagonal else _neg(self.d_b)
        return HyperDual(-self.value, d_a, d_b, _neg(self.d_ab))

    def __sub__(self, other):
        if not isinstance(other, HyperDual):
            return HyperDual(self.value - other, self.d_a, self.d_b, self.d_ab)
        d_a = _sub(self.d_a, other.d_a)
        d_b = d_a if (self.is_diagonal and other.is_diagonal) else _sub(self.d_b, other.d_b)
        return HyperDual(self.value - other.value, d_a, d_b, _sub(self.d_ab, other.d_ab))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, HyperDual):
            d_a = _mul(self.d_a, other)
            d_b = d_a if self.is_diagonal else _mul(self.d_b, other)
            return HyperDual(self.value * other, d_a, d_b, _mul(self.d_ab, other))
        x, y = self, other
        d_a = _add(_mul(x.d_a, y.value), _mul(x.value, y.d_a))
        if x.is_diagonal and y.is_diagonal:
            d_b = d_a
            cross = _mul(_mul(x.d_a, y.d_a), 2.0)
        else:
            d_b = _add(_mul(x.d_b, y.value), _mul(x.value, y.d_b))
            cross = _add(_mul(x.d_a, y.d_b), _mul(x.d_b, y.d_a))
        d_ab = _add(_add(_mul(x.d_ab, y.value), cross), _mul(x.value, y.d_ab))
        return HyperDual(x.value * y.value, d_a, d_b, d_ab)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, HyperDual):
            return self * (1.0 / other)
        return self * _unary(other, *_reciprocal_rule(other.value))

    def __rtruediv__(self, other):
        return _unary(self, *_reciprocal_rule(self.value)) * other

    def __pow__(self, k):
        if isinstance(k, (HyperDual, Var)) or not np.isscalar(k):
            raise UnsupportedOperation("only constant scalar exponents are supported")
        v = self.value
        if k == 2:
            return _unary(self, v * v, 2.0 * v, 2.0)
        return _unary(self, v ** k, k * v ** (k - 1), k * (k - 1) * v ** (k - 2))

    def __matmul__(self, w):
        if isinstance(w, HyperDual):
            raise UnsupportedOperation("matmul of two hyper-dual operands")
        d_a = _matmul(self.d_a, w)
        d_b = d_a if self.is_diagonal else _matmul(self.d_b, w)
        return HyperDual(self.value @ w, d_a, d_b, _matmul(self.d_ab, w))

    def __getitem__(self, index):
        def pick(c):
            return c if _is_zero(c) else c[index]

        d_a = pick(self.d_a)
        d_b = d_a if self.is_diagonal else pick(self.d_b)
        return HyperDual(self.value[index], d_a, d_b, pick(self.d_ab))

    def __bool__(self):
        raise UnsupportedOperation("data-dependent control flow on a hyper-dual value")


def _reciprocal_rule(v):
    r = 1.0 / v
    r2 = r * r
    return r, -r2, 2.0 * r2 * r


def _unary(x: HyperDual, f0, f1, f2) -> HyperDual:
    """Apply a scalar function given its value and first two derivatives at x.value."""
    d_a = _mul(f1, x.d_a)
    if x.is_diagonal:
        d_b = d_a
        curv = _mul(f2, _mul(x.d_a, x.d_a))
    else:
        d_b = _mul(f1, x.d_b)
        curv = _mul(f2, _mul(x.d_a, x.d_b))
    return HyperDual(f0, d_a, d_b, _add(_mul(f1, x.d_ab), curv))


# --------------------------------------------------------------------------
# elementary functions dispatching on operand type
# --------------------------------------------------------------------------

def _sincos(v):
    s, c = sin(v), cos(v)
    if isinstance(v, Var) and v.tape.nodes[s.index].op == "sin":
        v.tape.link(s, c)
    return s, c


def sin(x):
    if isinstance(x, HyperDual):
        s, c = _sincos(x.value)
        return _unary(x, s, c, -s)
    if isinstance(x, Var):
        return x.tape.apply("sin", x)
    return np.sin(x)


def cos(x):
    if isinstance(x, HyperDual):
        s, c = _sincos(x.value)
        return _unary(x, c, -s, -c)
    if isinstance(x, Var):
        return x.tape.apply("cos", x)
    return np.cos(x)


def exp(x):
    if isinstance(x, HyperDual):
        e = exp(x.value)
        return _unary(x, e, e, e)
    if isinstance(x, Var):
        return x.tape.apply("exp", x)
    return np.exp(x)


def tanh(x):
    if isinstance(x, HyperDual):
        t = tanh(x.value)
        f1 = 1.0 - t * t
        return _unary(x, t, f1, -2.0 * t * f1)
    if isinstance(x, Var):
        return x.tape.apply("tanh", x)
    return np.tanh(x)
