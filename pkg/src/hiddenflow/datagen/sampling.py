"""Scattered draws from grid snapshots."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from hiddenflow.datagen.spectral import GridField2D
from hiddenflow.dataset import SampledDataset


def sample_points(snapshots: Sequence[GridField2D], count: int, seed: int = 0,
                  noise: float = 0.0) -> SampledDataset:
    """Draw ``count`` records uniformly over (snapshot, grid node).

    Values are taken at stored nodes, never interpolated.  Draws are without
    replacement unless more records are requested than nodes exist.  With
    ``noise > 0`` Gaussian noise of that standard deviation is added to c and
    the result clamped to [0, 1].
    """
    if not snapshots:
        raise ValueError("no snapshots to sample from")
    if count < 1:
        raise ValueError("count must be at least 1")
    if noise < 0:
        raise ValueError("noise standard deviation must be non-negative")
    stack = np.stack([s.values for s in snapshots])
    times = np.array([s.t for s in snapshots])
    coords = snapshots[0].coords
    rng = np.random.default_rng(seed)
    total = stack.size
    flat = rng.choice(total, size=count, replace=count > total)
    it, ix, iy = np.unravel_index(flat, stack.shape)
    c = stack[it, ix, iy]
    if noise > 0:
        c = np.clip(c + rng.normal(0.0, noise, size=count), 0.0, 1.0)
    points = np.column_stack([times[it], coords[ix], coords[iy]])
    return SampledDataset(points, c)
