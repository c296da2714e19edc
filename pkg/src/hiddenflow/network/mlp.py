"""Densely connected approximator (t, x, y[, z]) -> (c, d, u, v[, w], p)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from hiddenflow.autodiff import HyperDual, sin, tanh
from hiddenflow.errors import DimensionError, InvalidArchitecture
from hiddenflow.network.jet import FieldJet

ACTIVATIONS = {"sin": sin, "tanh": tanh}


@dataclass(frozen=True)
class MlpArchitecture:
    dim: int = 2
    hidden_layers: int = 10
    width: int = 300
    activation: str = "sin"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.dim not in (2, 3):
            raise InvalidArchitecture(f"spatial dimension must be 2 or 3, got {self.dim}")
        if self.hidden_layers < 1:
            raise InvalidArchitecture("need at least one hidden layer")
        if self.width < 1:
            raise InvalidArchitecture(f"hidden width must be positive, got {self.width}")
        if self.activation not in ACTIVATIONS:
            raise InvalidArchitecture(f"unknown activation {self.activation!r}")

    @property
    def n_inputs(self) -> int:
        return self.dim + 1

    @property
    def n_outputs(self) -> int:
        return 5 if self.dim == 2 else 6

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        sizes = [self.n_inputs] + [self.width] * self.hidden_layers + [self.n_outputs]
        return list(zip(sizes[:-1], sizes[1:]))

    @property
    def n_params(self) -> int:
        return sum(a * b + b for a, b in self.layer_shapes)


class MlpParams:
    """Weights and biases backed by one flat parameter vector.

    ``layers`` returns (W, b) views into ``theta`` so updates to the flat
    vector are visible per layer and vice versa.
    """

    def __init__(self, arch: MlpArchitecture, theta: np.ndarray):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (arch.n_params,):
            raise ValueError(f"expected {arch.n_params} parameters, got shape {theta.shape}")
        self.arch = arch
        self.theta = theta

    @property
    def count(self) -> int:
        return self.theta.size

    @property
    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        out = []
        pos = 0
        for a, b in self.arch.layer_shapes:
            W = self.theta[pos:pos + a * b].reshape(a, b)
            pos += a * b
            out.append((W, self.theta[pos:pos + b]))
            pos += b
        return out

    @classmethod
    def from_layers(cls, arch: MlpArchitecture, layers) -> "MlpParams":
        flat = np.concatenate([np.concatenate([np.ravel(W), np.ravel(b)]) for W, b in layers])
        return cls(arch, flat)

    def copy(self) -> "MlpParams":
        return MlpParams(self.arch, self.theta.copy())


def initialize(arch: MlpArchitecture, seed: int = 0) -> MlpParams:
    """Glorot-uniform weights and zero biases."""
    arch.validate()
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out in arch.layer_shapes:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append((rng.uniform(-limit, limit, size=(fan_in, fan_out)), np.zeros(fan_out)))
    return MlpParams.from_layers(arch, layers)


@dataclass
class InputNormalization:
    """Affine map ``x_hat = scale * x + shift`` applied per input coordinate."""

    scale: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        self.scale = np.asarray(self.scale, dtype=float)
        self.shift = np.asarray(self.shift, dtype=float)
        if self.scale.shape != self.shift.shape or self.scale.ndim != 1:
            raise ValueError("scale and shift must be 1-D arrays of equal length")

    @classmethod
    def identity(cls, n: int) -> "InputNormalization":
        return cls(np.ones(n), np.zeros(n))

    @classmethod
    def from_bounds(cls, lo, hi) -> "InputNormalization":
        """Map the box [lo, hi] onto [-1, 1] in every coordinate."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        span = hi - lo
        flat = ~(span > 0)
        # degenerate extent: unit scale, value mapped to 0
        scale = np.where(flat, 1.0, 2.0 / np.where(flat, 1.0, span))
        shift = np.where(flat, -lo, -1.0 - lo * scale)
        return cls(scale, shift)

    @classmethod
    def from_points(cls, points: np.ndarray) -> "InputNormalization":
        points = np.asarray(points, dtype=float)
        return cls.from_bounds(points.min(axis=0), points.max(axis=0))

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """The box that maps onto [-1, 1]."""
        return (-1.0 - self.shift) / self.scale, (1.0 - self.shift) / self.scale

    def apply(self, x):
        return x * self.scale + self.shift


def _check_points(arch: MlpArchitecture, points) -> tuple[np.ndarray, bool]:
    x = np.asarray(points, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != arch.n_inputs:
        raise DimensionError(
            f"points have {x.shape[-1]} coordinates, architecture expects {arch.n_inputs}"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input coordinates")
    return x, single


def propagate(layers: Sequence, activation: str, h):
    """Run the layer stack on ``h`` (array, tape variable or hyper-dual)."""
    act = ACTIVATIONS[activation]
    for W, b in layers[:-1]:
        h = act(h @ W + b)
    W, b = layers[-1]
    return h @ W + b


def seeded_inputs(norm: InputNormalization, x) -> HyperDual:
    """Normalised inputs with one diagonal seed per coordinate, stacked on axis 0.

    Seeding coordinate k with ``scale[k]`` makes every propagated derivative
    a derivative in the original (un-normalised) coordinates.
    """
    n = norm.scale.size
    seeds = (np.eye(n) * norm.scale)[:, None, :]
    return HyperDual.diagonal(norm.apply(x), seeds)


def forward(params: MlpParams, arch: MlpArchitecture, norm: InputNormalization, points):
    """Network outputs at ``points`` of shape (n, dim+1) or a single point."""
    x, single = _check_points(arch, points)
    out = propagate(params.layers, arch.activation, norm.apply(x))
    return out[0] if single else out


def forward_jet(params: MlpParams, arch: MlpArchitecture, norm: InputNormalization,
                points) -> FieldJet:
    """Outputs with first derivatives in t and space and pure second spatial ones."""
    x, single = _check_points(arch, points)
    out = propagate(params.layers, arch.activation, seeded_inputs(norm, x))
    if single:
        out = out[..., 0, :]
    return FieldJet.from_hyperdual(arch.dim, out)
