"""Scalar programs: hyper-dual evaluation and finite-difference verification."""

from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np

from hiddenflow.autodiff.hyperdual import HyperDual
from hiddenflow.autodiff.tape import Tape, Var
from hiddenflow.errors import NonFiniteError, UnsupportedOperation


class Program:
    """A differentiable function of ``n_inputs`` real arguments.

    ``fn`` must be written with the arithmetic operators and the elementary
    functions exported by :mod:`hiddenflow.autodiff` (``sin``, ``cos``,
    ``exp``, ``tanh``, ``**`` with a constant exponent).  The function is
    traced once at construction so that anything else (``math.log``,
    ``np.arctan``, branching on values, ...) is rejected up front.
    """

    def __init__(self, fn: Callable, n_inputs: int):
        self.fn = fn
        self.n_inputs = n_inputs
        tape = Tape()
        probe = [tape.leaf(0.5 + 0.25 * i) for i in range(n_inputs)]
        try:
            with np.errstate(all="ignore"):
                out = fn(*probe)
        except UnsupportedOperation:
            raise
        except TypeError as exc:
            raise UnsupportedOperation(f"program uses an unsupported operation: {exc}") from exc
        outs = out if isinstance(out, (tuple, list)) else (out,)
        for o in outs:
            if not isinstance(o, (Var, int, float, np.floating)):
                raise UnsupportedOperation(f"program returned unsupported type {type(o).__name__}")
        self.n_outputs = len(outs)
        self.returns_tuple = isinstance(out, (tuple, list))

    def __call__(self, *args):
        return self.fn(*args)

    def values(self, x: Sequence[float]) -> np.ndarray:
        with np.errstate(all="ignore"):
            out = self.fn(*[np.float64(v) for v in x])
        outs = out if self.returns_tuple else (out,)
        return np.array([float(o) for o in outs])


def _as_float(c) -> float:
    if isinstance(c, Var):
        return float(c.value)
    return float(c)


def evaluate_hyperdual(program: Program | Callable, inputs: Sequence[float],
                       seed_a: int, seed_b: int):
    """Value, both directional derivatives and the mixed second derivative.

    Returns a :class:`HyperDual` with float components, or a tuple of them
    when the program has several outputs.  Each elementary operation is
    recorded on a finiteness-checking tape so that a division by zero or an
    overflow reports the offending node.
    """
    if not isinstance(program, Program):
        program = Program(program, len(inputs))
    n = len(inputs)
    if len(inputs) != program.n_inputs:
        raise ValueError(f"program takes {program.n_inputs} inputs, got {n}")
    for s in (seed_a, seed_b):
        if not 0 <= s < n:
            raise IndexError(f"seed index {s} out of range for {n} inputs")

    tape = Tape(check_finite=True)
    args = []
    for i, x in enumerate(inputs):
        v = tape.leaf(np.float64(x), requires_grad=False)
        a = 1.0 if i == seed_a else 0.0
        if seed_a == seed_b:
            args.append(HyperDual.diagonal(v, a))
        else:
            args.append(HyperDual(v, a, 1.0 if i == seed_b else 0.0))
    with np.errstate(all="ignore"):
        out = program(*args)

    def convert(o) -> HyperDual:
        if not isinstance(o, HyperDual):
            return HyperDual(_as_float(o), 0.0, 0.0, 0.0)
        comps = [_as_float(c) for c in o.astuple()]
        for c in comps:
            if not np.isfinite(c):
                raise NonFiniteError(len(tape) - 1, "output")
        return HyperDual(*comps)

    if isinstance(out, (tuple, list)):
        return tuple(convert(o) for o in out)
    return convert(out)


def finite_difference_check(program: Program | Callable, inputs: Sequence[float],
                            order: int = 1, step: float = 1e-5) -> float:
    """Largest relative disagreement between hyper-dual and central differences.

    ``order=1`` compares every first partial derivative; ``order=2`` every
    second partial (pure and mixed).  The error for one entry is
    ``|AD - FD| / max(|AD|, 1e-12)``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if not isinstance(program, Program):
        program = Program(program, len(inputs))
    x0 = np.asarray(inputs, dtype=float)
    n = x0.size

    def f(x):
        y = program.values(x)
        if not np.all(np.isfinite(y)):
            raise NonFiniteError(-1, "finite-difference evaluation")
        return y

    def shifted(*moves):
        x = x0.copy()
        for i, s in moves:
            x[i] += s * step
        return f(x)

    worst = 0.0
    if order == 1:
        pairs = [(i, i) for i in range(n)]
    else:
        pairs = list(itertools.combinations_with_replacement(range(n), 2))
    for i, j in pairs:
        hd = evaluate_hyperdual(program, x0, i, j)
        hd = hd if isinstance(hd, tuple) else (hd,)
        if order == 1:
            ad = np.array([h.d_a for h in hd])
            fd = (shifted((i, 1)) - shifted((i, -1))) / (2 * step)
        else:
            ad = np.array([h.d_ab for h in hd])
            if i == j:
                fd = (shifted((i, 1)) - 2 * f(x0) + shifted((i, -1))) / step**2
            else:
                fd = (shifted((i, 1), (j, 1)) - shifted((i, 1), (j, -1))
                      - shifted((i, -1), (j, 1)) + shifted((i, -1), (j, -1))) / (4 * step**2)
        err = np.abs(ad - fd) / np.maximum(np.abs(ad), 1e-12)
        worst = max(worst, float(np.max(err)))
    return worst
