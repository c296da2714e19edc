"""Closed-form incompressible Navier-Stokes solutions.

Every variant is written once as a symbolic expression; derivatives are
taken symbolically and compiled to numpy, so the values served here are an
independent reference for the network jets and the residual code.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import sympy as sp

from hiddenflow.network.jet import COORDINATES, FieldJet

_t, _x, _y, _z, _nu = sp.symbols("t x y z nu", real=True)


def _taylor_green():
    e = sp.exp(-2 * _nu * _t)
    return {
        "u": -sp.cos(_x) * sp.sin(_y) * e,
        "v": sp.sin(_x) * sp.cos(_y) * e,
        "p": -sp.Rational(1, 4) * (sp.cos(2 * _x) + sp.cos(2 * _y)) * e**2,
    }


def _beltrami():
    # Ethier & Steinman exact solution with a = pi/4, d = pi/2
    a, d = sp.pi / 4, sp.pi / 2
    decay = sp.exp(-d**2 * _nu * _t)
    x, y, z = _x, _y, _z
    u = -a * (sp.exp(a * x) * sp.sin(a * y + d * z) + sp.exp(a * z) * sp.cos(a * x + d * y))
    v = -a * (sp.exp(a * y) * sp.sin(a * z + d * x) + sp.exp(a * x) * sp.cos(a * y + d * z))
    w = -a * (sp.exp(a * z) * sp.sin(a * x + d * y) + sp.exp(a * y) * sp.cos(a * z + d * x))
    p = -a**2 / 2 * (
        sp.exp(2 * a * x) + sp.exp(2 * a * y) + sp.exp(2 * a * z)
        + 2 * sp.sin(a * x + d * y) * sp.cos(a * z + d * x) * sp.exp(a * (y + z))
        + 2 * sp.sin(a * y + d * z) * sp.cos(a * x + d * y) * sp.exp(a * (z + x))
        + 2 * sp.sin(a * z + d * x) * sp.cos(a * y + d * z) * sp.exp(a * (x + y))
    )
    return {"u": u * decay, "v": v * decay, "w": w * decay, "p": p * decay**2}


def _stagnation():
    return {"u": _x, "v": -_y, "p": -(_x**2 + _y**2) / 2}


def _rigid_rotation():
    return {"u": -_y, "v": _x, "p": (_x**2 + _y**2) / 2}


def _uniform():
    return {"u": sp.Integer(1), "v": sp.Integer(0), "p": sp.Integer(0)}


def _quiescent():
    return {"u": sp.Integer(0), "v": sp.Integer(0), "p": sp.Integer(0)}


_VARIANTS = {
    "TaylorGreen2D": (2, _taylor_green, True),
    "Beltrami3D": (3, _beltrami, False),
    "Stagnation2D": (2, _stagnation, False),
    "RigidRotation2D": (2, _rigid_rotation, False),
    # steady fields for exercising the transport solver
    "Uniform2D": (2, _uniform, True),
    "Quiescent2D": (2, _quiescent, True),
}

VARIANTS = tuple(_VARIANTS)


@lru_cache(maxsize=None)
def _compiled(variant: str):
    dim, build, _ = _VARIANTS[variant]
    fields = build()
    coords = [_t, _x, _y, _z][: dim + 1]
    space = coords[1:]
    exprs = {}
    for name, f in fields.items():
        exprs[name] = f
        for c in coords:
            exprs[f"{name}_{c}"] = sp.diff(f, c)
        for c in space:
            exprs[f"{name}_{c}{c}"] = sp.diff(f, c, 2)
    names = list(exprs)
    fn = sp.lambdify((_t, _x, _y, _z, _nu), [exprs[n] for n in names], modules="numpy")
    return names, fn


@dataclass(frozen=True)
class AnalyticFlow:
    variant: str = "TaylorGreen2D"
    re: float = 10.0

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown flow variant {self.variant!r}; known: {', '.join(VARIANTS)}")
        if not self.re > 0:
            raise ValueError("Re must be positive")

    @property
    def dim(self) -> int:
        return _VARIANTS[self.variant][0]

    @property
    def periodic(self) -> bool:
        """True when the field is 2*pi-periodic in every spatial direction."""
        return _VARIANTS[self.variant][2]

    def evaluate(self, t, x, y, z=None) -> dict[str, np.ndarray]:
        return analytic_eval(self, t, x, y, z)

    def velocity(self, t, x, y, z=None):
        f = analytic_eval(self, t, x, y, z)
        return tuple(f[k] for k in ("u", "v", "w")[: self.dim])


def analytic_eval(flow: AnalyticFlow, t, x, y, z=None) -> dict[str, np.ndarray]:
    """Velocity, pressure and all first / pure second derivatives.

    Keys follow the jet naming: ``u``, ``u_t``, ``u_x``, ``u_xx``, ``p_y``...
    """
    if flow.dim == 3 and z is None:
        raise ValueError(f"{flow.variant} is three-dimensional; z is required")
    names, fn = _compiled(flow.variant)
    args = [np.asarray(a, dtype=float) for a in (t, x, y, 0.0 if z is None else z)]
    shape = np.broadcast_shapes(*(a.shape for a in args))
    if not all(np.all(np.isfinite(a)) for a in args):
        raise ValueError("non-finite coordinates")
    vals = fn(*args, 1.0 / flow.re)
    return {n: np.broadcast_to(np.asarray(v, dtype=float), shape).copy() for n, v in zip(names, vals)}


def analytic_jet(flow: AnalyticFlow, t, x, y, z=None, c: float = 0.5) -> FieldJet:
    """Jet of an analytic flow carrying a uniform scalar ``c`` (and d = 1 - c)."""
    f = analytic_eval(flow, t, x, y, z)
    dim = flow.dim
    shape = f["u"].shape
    channels = dict(f)
    for s, val in (("c", c), ("d", 1.0 - c)):
        channels[s] = np.full(shape, val)
        for k in COORDINATES[dim]:
            channels[f"{s}_{k}"] = np.zeros(shape)
        for k in COORDINATES[dim][1:]:
            channels[f"{s}_{k}{k}"] = np.zeros(shape)
    return FieldJet(dim, channels)
