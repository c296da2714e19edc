"""Forward (hyper-dual) and reverse (tape) automatic differentiation."""

from hiddenflow.autodiff.hyperdual import HyperDual, cos, exp, sin, tanh
from hiddenflow.autodiff.program import Program, evaluate_hyperdual, finite_difference_check
from hiddenflow.autodiff.tape import (
    SUPPORTED_OPS,
    GradientResult,
    Tape,
    Var,
    reverse_gradient,
)

__all__ = [
    "HyperDual",
    "Program",
    "SUPPORTED_OPS",
    "GradientResult",
    "Tape",
    "Var",
    "cos",
    "evaluate_hyperdual",
    "exp",
    "finite_difference_check",
    "reverse_gradient",
    "sin",
    "tanh",
]
