"""Transport, momentum and continuity residuals of incompressible flow.

All functions are written with plain arithmetic so they accept jets whose
channels are floats, numpy arrays or tape variables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from hiddenflow.errors import DimensionError
from hiddenflow.network.jet import FieldJet


@dataclass
class FlowParams:
    """Reynolds and Peclet numbers.

    ``pec = math.inf`` encodes the non-diffusive limit (inverse Peclet 0).
    Trainable parameters are optimised through their log, ``re = exp(s_re)``.
    """

    re: float
    pec: float
    train_re: bool = False
    train_pec: bool = False

    def __post_init__(self):
        self.re = float(self.re)
        self.pec = float(self.pec)
        if not self.re > 0 or not self.pec > 0:
            raise ValueError(f"Re and Pec must be positive, got Re={self.re}, Pec={self.pec}")

    @property
    def inv_re(self) -> float:
        return 0.0 if math.isinf(self.re) else 1.0 / self.re

    @property
    def inv_pec(self) -> float:
        return 0.0 if math.isinf(self.pec) else 1.0 / self.pec

    @property
    def s_re(self) -> float:
        return math.log(self.re)

    @property
    def s_pec(self) -> float:
        return math.log(self.pec)

    @property
    def trainable(self) -> tuple[bool, bool]:
        return (self.train_re, self.train_pec)

    @classmethod
    def from_exponents(cls, s_re: float, s_pec: float, train_re=True, train_pec=True):
        return cls(math.exp(s_re), math.exp(s_pec), train_re, train_pec)


@dataclass
class ResidualSet:
    """e1 (c transport), e2 (d transport), e3-e5 (momentum), e6 (continuity).

    ``e5`` is ``None`` for two-dimensional flows.
    """

    e1: object
    e2: object
    e3: object
    e4: object
    e5: object
    e6: object

    def items(self):
        for name in ("e1", "e2", "e3", "e4", "e5", "e6"):
            value = getattr(self, name)
            if value is not None:
                yield name, value

    def max_abs(self, names=("e1", "e2", "e3", "e4", "e5", "e6")) -> float:
        vals = [np.max(np.abs(v)) for k, v in self.items() if k in names]
        return float(max(vals)) if vals else 0.0


def _transport(jet, s, ui, coords, inv_diff):
    adv = getattr(jet, f"{s}_t")
    for u, k in zip(ui, coords):
        adv = adv + getattr(jet, u) * getattr(jet, f"{s}_{k}")
    lap = getattr(jet, f"{s}_{coords[0]}{coords[0]}")
    for k in coords[1:]:
        lap = lap + getattr(jet, f"{s}_{k}{k}")
    return adv - inv_diff * lap


def _momentum(jet, comp, ui, coords, k_p, inv_re):
    return _transport(jet, comp, ui, coords, inv_re) + getattr(jet, f"p_{k_p}")


def residuals_3d(jet: FieldJet, fp) -> ResidualSet:
    """Residuals of the 3D transport and Navier-Stokes equations.

    ``fp`` needs ``inv_re`` and ``inv_pec`` attributes; a :class:`FlowParams`
    or any object holding tape variables under those names will do.
    """
    if jet.dim != 3:
        raise DimensionError("residuals_3d needs a 3D jet")
    ui, xs = ("u", "v", "w"), ("x", "y", "z")
    return ResidualSet(
        e1=_transport(jet, "c", ui, xs, fp.inv_pec),
        e2=_transport(jet, "d", ui, xs, fp.inv_pec),
        e3=_momentum(jet, "u", ui, xs, "x", fp.inv_re),
        e4=_momentum(jet, "v", ui, xs, "y", fp.inv_re),
        e5=_momentum(jet, "w", ui, xs, "z", fp.inv_re),
        e6=jet.u_x + jet.v_y + jet.w_z,
    )


def residuals_2d(jet: FieldJet, fp) -> ResidualSet:
    """Residuals with the z-coordinate and w-component dropped."""
    if jet.dim != 2:
        raise DimensionError("residuals_2d needs a 2D jet")
    ui, xs = ("u", "v"), ("x", "y")
    return ResidualSet(
        e1=_transport(jet, "c", ui, xs, fp.inv_pec),
        e2=_transport(jet, "d", ui, xs, fp.inv_pec),
        e3=_momentum(jet, "u", ui, xs, "x", fp.inv_re),
        e4=_momentum(jet, "v", ui, xs, "y", fp.inv_re),
        e5=None,
        e6=jet.u_x + jet.v_y,
    )


def residuals(jet: FieldJet, fp) -> ResidualSet:
    return residuals_2d(jet, fp) if jet.dim == 2 else residuals_3d(jet, fp)


def auxiliary_complement(c):
    """d = 1 - c."""
    return 1.0 - np.asarray(c, dtype=float)


def peclet_from_prandtl(re: float, pr: float) -> float:
    if not re > 0 or not pr > 0:
        raise ValueError(f"Re and Pr must be positive, got Re={re}, Pr={pr}")
    return re * pr
