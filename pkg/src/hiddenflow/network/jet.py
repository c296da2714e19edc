"""Bundles of field values and the derivatives the transport residuals need."""

from __future__ import annotations

from typing import Any

import numpy as np

VARIABLES = {2: ("c", "d", "u", "v", "p"), 3: ("c", "d", "u", "v", "w", "p")}
COORDINATES = {2: ("t", "x", "y"), 3: ("t", "x", "y", "z")}


def channel_names(dim: int) -> list[str]:
    """Every channel a jet of this dimension carries, in a stable order."""
    names = []
    space = COORDINATES[dim][1:]
    for var in VARIABLES[dim]:
        names.append(var)
        names.extend(f"{var}_{k}" for k in COORDINATES[dim])
        names.extend(f"{var}_{k}{k}" for k in space)
    return names


class FieldJet:
    """Values of (c, d, u, v[, w], p) with first and pure second derivatives.

    Channels are read as attributes: ``jet.u``, ``jet.u_t``, ``jet.c_xx``.
    In 2D the ``w`` channels and every ``z`` derivative are absent; asking
    for them raises ``AttributeError``.  Entries may be floats, arrays (one
    value per point) or tape variables.
    """

    __slots__ = ("dim", "channels")

    def __init__(self, dim: int, channels: dict[str, Any]):
        if dim not in (2, 3):
            raise ValueError(f"spatial dimension must be 2 or 3, got {dim}")
        missing = set(channel_names(dim)) - set(channels)
        if missing:
            raise ValueError(f"jet is missing channels: {sorted(missing)}")
        self.dim = dim
        self.channels = channels

    def __getattr__(self, name: str):
        try:
            return self.channels[name]
        except KeyError:
            raise AttributeError(f"{self.dim}D jet has no channel {name!r}") from None

    def __repr__(self) -> str:
        return f"FieldJet(dim={self.dim}, channels={len(self.channels)})"

    @classmethod
    def zeros(cls, dim: int) -> "FieldJet":
        return cls(dim, {name: 0.0 for name in channel_names(dim)})

    @classmethod
    def from_hyperdual(cls, dim: int, out) -> "FieldJet":
        """Unpack a network output whose seeds are stacked on the leading axis.

        ``out.value`` has shape (..., n_outputs); ``out.d_a`` and ``out.d_ab``
        carry one extra leading axis indexed by coordinate (t, x, y[, z]).
        """
        channels = {}
        coords = COORDINATES[dim]
        for j, var in enumerate(VARIABLES[dim]):
            channels[var] = out.value[..., j]
            for k, name in enumerate(coords):
                channels[f"{var}_{name}"] = out.d_a[k, ..., j]
                if k > 0:
                    channels[f"{var}_{name}{name}"] = out.d_ab[k, ..., j]
        return cls(dim, channels)

    def lift_to_3d(self) -> "FieldJet":
        """Embed a 2D jet in 3D with w = 0 and no z-dependence."""
        if self.dim == 3:
            return self
        channels = dict(self.channels)
        for name in channel_names(3):
            if name not in channels:
                channels[name] = 0.0
        return FieldJet(3, channels)

    def as_arrays(self) -> dict[str, np.ndarray]:
        return {k: np.asarray(v, dtype=float) for k, v in self.channels.items()}

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.as_arrays().values())
