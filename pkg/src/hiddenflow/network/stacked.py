"""Fused jet propagation for training.

All derivative channels of a layer live in one array ``J`` of shape
``(1 + n + m, points, width)``: row 0 is the value, rows ``1..n`` the first
derivatives in (t, x, y[, z]) and the last ``m = n - 1`` rows the pure second
derivatives in space.  One matmul and one fused activation node per layer
replace the per-component hyper-dual graph, which keeps the recorded tape
short.  Results agree with :func:`~hiddenflow.network.mlp.forward_jet`.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from hiddenflow.autodiff.tape import Var, register_op
from hiddenflow.errors import UnsupportedOperation
from hiddenflow.network.jet import COORDINATES, VARIABLES, FieldJet


def _sin_derivs(z):
    s, c = np.sin(z), np.cos(z)
    return s, c, -s, -c


def _tanh_derivs(z):
    t = np.tanh(z)
    f1 = 1.0 - t * t
    return t, f1, -2.0 * t * f1, (6.0 * t * t - 2.0) * f1


_DERIVS = {"sin": _sin_derivs, "tanh": _tanh_derivs}


def _split(Z, n):
    return Z[0], Z[1:1 + n], Z[1 + n:], Z[2:1 + n]


def _act_fwd(vals, attrs):
    Z, b = vals
    n = attrs["n"]
    z0, za, zab, zsp = _split(Z, n)
    f0, f1, f2, f3 = _DERIVS[attrs["activation"]](z0 + b)
    # replay reruns the forward, so the cache always matches the current values
    attrs["cache"] = (f1, f2, f3)
    out = np.empty_like(Z)
    out[0] = f0
    np.multiply(f1, za, out=out[1:1 + n])
    np.multiply(f1, zab, out=out[1 + n:])
    out[1 + n:] += f2 * (zsp * zsp)
    return out


def _act_bwd(g, vals, out, attrs, needs):
    Z, b = vals
    n = attrs["n"]
    z0, za, zab, zsp = _split(Z, n)
    f1, f2, f3 = attrs["cache"]
    g0, ga, gab, _ = _split(g, n)
    dZ = np.empty_like(Z)
    dz0 = g0 * f1
    dz0 += f2 * np.einsum("kbh,kbh->bh", ga, za)
    dz0 += f2 * np.einsum("kbh,kbh->bh", gab, zab)
    dz0 += f3 * np.einsum("kbh,kbh->bh", gab, zsp * zsp)
    dZ[0] = dz0
    np.multiply(f1, ga, out=dZ[1:1 + n])
    np.multiply(f1, gab, out=dZ[1 + n:])
    dZ[2:1 + n] += 2.0 * f2 * zsp * gab
    gb = dz0.sum(axis=0) if needs[1] else None
    return (dZ if needs[0] else None), gb


def _bias_fwd(vals, attrs):
    Z, b = vals
    out = Z.copy()
    out[0] += b
    return out


def _bias_bwd(g, vals, out, attrs, needs):
    return (g if needs[0] else None), (g[0].sum(axis=0) if needs[1] else None)


def _seed_fwd(vals, attrs):
    x = vals[0]
    scale, shift = attrs["scale"], attrs["shift"]
    n = scale.size
    J = np.zeros((2 * n, x.shape[0], n))
    J[0] = x * scale + shift
    for k in range(n):
        J[1 + k, :, k] = scale[k]
    return J


def _seed_bwd(g, vals, out, attrs, needs):
    if needs[0]:
        raise UnsupportedOperation("jet seeding is not differentiable in its points")
    return (None,)


register_op("jet_act", _act_fwd, _act_bwd)
register_op("jet_bias", _bias_fwd, _bias_bwd)
register_op("jet_seed", _seed_fwd, _seed_bwd)


def stacked_jet(layers: Sequence, activation: str, x: Var, scale, shift, dim: int) -> FieldJet:
    """Record the network jet at raw points ``x`` (tape variable of shape (B, dim+1))."""
    if activation not in _DERIVS:
        raise UnsupportedOperation(f"no fused kernel for activation {activation!r}")
    n = dim + 1
    tape = x.tape
    h = tape.apply("jet_seed", x, scale=np.asarray(scale, float), shift=np.asarray(shift, float))
    for W, b in layers[:-1]:
        h = tape.apply("jet_act", h @ W, b, n=n, activation=activation)
    W, b = layers[-1]
    out = tape.apply("jet_bias", h @ W, b)
    coords = COORDINATES[dim]
    channels = {}
    for j, var in enumerate(VARIABLES[dim]):
        col = out[:, :, j]
        channels[var] = col[0]
        for k, name in enumerate(coords):
            channels[f"{var}_{name}"] = col[1 + k]
            if k > 0:
                channels[f"{var}_{name}{name}"] = col[n + k]
    return FieldJet(dim, channels)
