"""Engineering quantities from a trained (or analytic) flow field.

Forces and wall shear stress are surface integrals of the viscous traction
and use exact derivatives of the field provider, never finite differences
on exported grids.  Quadrature is the trapezoidal rule encoded in the
surface's ``ds`` weights.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np

from hiddenflow.autodiff import HyperDual
from hiddenflow.checkpoint import Checkpoint
from hiddenflow.datagen.analytic import AnalyticFlow, analytic_eval
from hiddenflow.errors import DimensionError, FormatError
from hiddenflow.network import VARIABLES, forward, forward_jet

GRADIENT_KEYS = ("u", "v", "p", "u_x", "u_y", "v_x", "v_y")


# --------------------------------------------------------------------------
# surfaces
# --------------------------------------------------------------------------

@dataclass
class SurfaceDiscretization:
    """Ordered boundary points with outward unit normals and quadrature weights."""

    points: np.ndarray
    normals: np.ndarray
    ds: np.ndarray
    closed: bool = True

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.normals = np.atleast_2d(np.asarray(self.normals, dtype=float))
        self.ds = np.asarray(self.ds, dtype=float).reshape(-1)
        n = self.points.shape[0]
        if self.points.shape != (n, 2) or self.normals.shape != (n, 2) or self.ds.shape != (n,):
            raise ValueError("points and normals must be (n, 2) with one weight per point")
        if n < 1:
            raise ValueError("surface has no points")
        if not all(np.all(np.isfinite(a)) for a in (self.points, self.normals, self.ds)):
            raise ValueError("surface contains non-finite values")
        if np.any(self.ds < 0):
            raise ValueError("quadrature weights must be non-negative")
        norm_err = np.max(np.abs(np.hypot(self.normals[:, 0], self.normals[:, 1]) - 1.0))
        if norm_err > 1e-12:
            raise ValueError(f"normals are not unit length (max deviation {norm_err:.3g})")

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.points[:, 1]

    def normal_sum(self) -> np.ndarray:
        return self.normals.T @ self.ds

    def rotated(self, angle: float) -> "SurfaceDiscretization":
        """The same surface rotated counter-clockwise about the origin."""
        c, s = np.cos(angle), np.sin(angle)
        R = np.array([[c, -s], [s, c]])
        return SurfaceDiscretization(self.points @ R.T, self.normals @ R.T, self.ds, self.closed)


def circle_surface(n: int, radius: float = 1.0, center=(0.0, 0.0)) -> SurfaceDiscretization:
    """Equispaced points on a circle; trapezoidal weights on periodic data are uniform."""
    if n < 3:
        raise ValueError("a closed circle needs at least 3 points")
    if not radius > 0:
        raise ValueError("radius must be positive")
    theta = 2.0 * np.pi * np.arange(n) / n
    normals = np.column_stack([np.cos(theta), np.sin(theta)])
    points = np.asarray(center, dtype=float) + radius * normals
    return SurfaceDiscretization(points, normals, np.full(n, 2.0 * np.pi * radius / n), True)


def segment_surface(start, end, n: int, normal) -> SurfaceDiscretization:
    """Straight open wall from ``start`` to ``end`` with trapezoidal end weights."""
    if n < 2:
        raise ValueError("a wall segment needs at least 2 points")
    start, end = np.asarray(start, dtype=float), np.asarray(end, dtype=float)
    s = np.linspace(0.0, 1.0, n)
    points = start + s[:, None] * (end - start)
    h = np.linalg.norm(end - start) / (n - 1)
    ds = np.full(n, h)
    ds[[0, -1]] = 0.5 * h
    nrm = np.asarray(normal, dtype=float)
    nrm = nrm / np.linalg.norm(nrm)
    return SurfaceDiscretization(points, np.tile(nrm, (n, 1)), ds, False)


SURFACE_HEADER = ["x", "y", "nx", "ny", "ds"]


def load_surface(path, closed: bool = True) -> SurfaceDiscretization:
    """Read an ``x,y,nx,ny,ds`` CSV."""
    path = Path(path)
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != SURFACE_HEADER:
            raise FormatError(f"expected header {','.join(SURFACE_HEADER)!r}", path, 1)
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != 5:
                raise FormatError(f"expected 5 fields, found {len(rec)}", path, lineno)
            try:
                rows.append([float(f) for f in rec])
            except ValueError as exc:
                raise FormatError(f"bad number: {exc}", path, lineno) from None
    if not rows:
        raise FormatError("surface file holds no points", path)
    a = np.array(rows)
    try:
        return SurfaceDiscretization(a[:, :2], a[:, 2:4], a[:, 4], closed)
    except ValueError as exc:
        raise FormatError(str(exc), path) from None


def save_surface(surface: SurfaceDiscretization, path) -> None:
    rows = np.column_stack([surface.points, surface.normals, surface.ds])
    _write_csv(path, SURFACE_HEADER, rows)


# --------------------------------------------------------------------------
# field providers
# --------------------------------------------------------------------------

class FieldProvider(Protocol):
    dim: int

    def gradients(self, t: float, points: np.ndarray) -> dict[str, np.ndarray]:
        """u, v, p and the velocity gradient at 2D ``points`` for time ``t``."""


@dataclass
class NetworkField:
    """Trained network read through its checkpoint."""

    checkpoint: Checkpoint
    dim: int = field(init=False)

    def __post_init__(self):
        self.dim = self.checkpoint.arch.dim

    def _inputs(self, t, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        cols = [np.full(len(points), float(t)), points[:, 0], points[:, 1]]
        if self.dim == 3:
            cols.append(np.zeros(len(points)) if points.shape[1] < 3 else points[:, 2])
        return np.column_stack(cols)

    def gradients(self, t, points):
        ck = self.checkpoint
        jet = forward_jet(ck.params, ck.arch, ck.norm, self._inputs(t, points))
        return {k: np.asarray(getattr(jet, k)) for k in GRADIENT_KEYS}

    def values(self, points: np.ndarray) -> dict[str, np.ndarray]:
        ck = self.checkpoint
        out = forward(ck.params, ck.arch, ck.norm, points)
        return {name: out[:, j] for j, name in enumerate(VARIABLES[self.dim])}


@dataclass
class AnalyticFlowField:
    flow: AnalyticFlow
    dim: int = field(init=False)

    def __post_init__(self):
        self.dim = self.flow.dim

    def gradients(self, t, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        z = None if self.dim == 2 else 0.0
        f = analytic_eval(self.flow, t, points[:, 0], points[:, 1], z)
        return {k: f[k] for k in GRADIENT_KEYS}


@dataclass
class CallableField:
    """User field ``fn(t, x, y) -> (u, v, p)`` differentiated with hyper-dual numbers.

    ``fn`` must be written with arithmetic and the functions in
    :mod:`hiddenflow.autodiff`; constant components may be plain numbers.
    """

    fn: Callable
    dim: int = 2

    def gradients(self, t, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = len(points)
        seeds = np.eye(2)[:, :, None] * np.ones(n)
        x = HyperDual.diagonal(points[:, 0], seeds[0])
        y = HyperDual.diagonal(points[:, 1], seeds[1])
        out = {}
        for name, comp in zip(("u", "v", "p"), self.fn(float(t), x, y)):
            if isinstance(comp, HyperDual):
                val = np.broadcast_to(comp.value, (n,))
                grad = np.broadcast_to(comp.d_a, (2, n)) if not np.isscalar(comp.d_a) else np.zeros((2, n))
            else:
                val, grad = np.broadcast_to(np.asarray(comp, dtype=float), (n,)), np.zeros((2, n))
            out[name] = np.array(val, dtype=float)
            if name != "p":
                out[f"{name}_x"], out[f"{name}_y"] = np.array(grad[0]), np.array(grad[1])
        return out


@dataclass
class RotatedField:
    """``field`` rotated counter-clockwise by ``angle`` about the origin.

    Pressure is a scalar, velocity a vector and the velocity gradient a
    tensor: u'(x) = R u(R^T x), grad u'(x) = R grad u(R^T x) R^T.
    """

    base: FieldProvider
    angle: float
    dim: int = 2

    def gradients(self, t, points):
        c, s = np.cos(self.angle), np.sin(self.angle)
        R = np.array([[c, -s], [s, c]])
        points = np.atleast_2d(np.asarray(points, dtype=float))
        f = self.base.gradients(t, points @ R)
        vel = R @ np.stack([f["u"], f["v"]])
        G = np.array([[f["u_x"], f["u_y"]], [f["v_x"], f["v_y"]]])
        Gr = np.einsum("ij,jkn,lk->iln", R, G, R)
        return {"u": vel[0], "v": vel[1], "p": f["p"],
                "u_x": Gr[0, 0], "u_y": Gr[0, 1], "v_x": Gr[1, 0], "v_y": Gr[1, 1]}


# --------------------------------------------------------------------------
# forces and wall shear stress
# --------------------------------------------------------------------------

@dataclass
class ForceSeries:
    t: np.ndarray
    lift: np.ndarray
    drag: np.ndarray

    def __post_init__(self):
        if not (np.all(np.isfinite(self.lift)) and np.all(np.isfinite(self.drag))):
            raise ValueError("non-finite force values")


def lift_drag(field_: FieldProvider, surface: SurfaceDiscretization, re: float,
              t: float) -> tuple[float, float]:
    """Trapezoidal lift and drag of the traction on a closed surface.

    F_D = sum[-p n_x + 2/Re u_x n_x + 1/Re (u_y + v_x) n_y] ds
    F_L = sum[-p n_y + 2/Re v_y n_y + 1/Re (u_y + v_x) n_x] ds
    """
    if not surface.closed:
        raise ValueError("forces are defined on closed surfaces only")
    if not re > 0:
        raise ValueError("Re must be positive")
    f = field_.gradients(t, surface.points)
    nx, ny = surface.normals[:, 0], surface.normals[:, 1]
    inv_re = 1.0 / re
    shear = f["u_y"] + f["v_x"]
    drag = -f["p"] * nx + 2.0 * inv_re * f["u_x"] * nx + inv_re * shear * ny
    lift = -f["p"] * ny + 2.0 * inv_re * f["v_y"] * ny + inv_re * shear * nx
    return float(lift @ surface.ds), float(drag @ surface.ds)


def force_series(field_: FieldProvider, surface: SurfaceDiscretization, re: float,
                 times: Sequence[float]) -> ForceSeries:
    times = np.asarray(times, dtype=float).reshape(-1)
    fl, fd = zip(*(lift_drag(field_, surface, re, t) for t in times)) if len(times) else ((), ())
    return ForceSeries(times, np.array(fl, dtype=float), np.array(fd, dtype=float))


@dataclass
class WssField:
    """Wall traction per time (rows) and wall point (columns)."""

    t: np.ndarray
    points: np.ndarray
    tau_x: np.ndarray
    tau_y: np.ndarray

    @property
    def wss(self) -> np.ndarray:
        return np.sqrt(self.tau_x**2 + self.tau_y**2)


def wall_shear_stress(field_: FieldProvider, wall: SurfaceDiscretization, re: float,
                      t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Viscous traction ``(tau_x, tau_y, |tau|)`` at each wall point.

    tau_x = 2/Re [u_x n_x + (v_x + u_y)/2 n_y]
    tau_y = 2/Re [(u_y + v_x)/2 n_x + v_y n_y]
    """
    if not re > 0:
        raise ValueError("Re must be positive")
    f = field_.gradients(t, wall.points)
    nx, ny = wall.normals[:, 0], wall.normals[:, 1]
    half_shear = 0.5 * (f["u_y"] + f["v_x"])
    k = 2.0 / re
    tau_x = k * (f["u_x"] * nx + half_shear * ny)
    tau_y = k * (half_shear * nx + f["v_y"] * ny)
    return tau_x, tau_y, np.sqrt(tau_x**2 + tau_y**2)


def wss_series(field_: FieldProvider, wall: SurfaceDiscretization, re: float,
               times: Sequence[float]) -> WssField:
    times = np.asarray(times, dtype=float).reshape(-1)
    tx, ty = [], []
    for t in times:
        a, b, _ = wall_shear_stress(field_, wall, re, t)
        tx.append(a)
        ty.append(b)
    shape = (len(times), len(wall))
    return WssField(times, wall.points.copy(), np.reshape(tx, shape), np.reshape(ty, shape))


# --------------------------------------------------------------------------
# error reports
# --------------------------------------------------------------------------

@dataclass
class ErrorRow:
    t: float
    field: str
    rel_l2: float
    aligned: bool

    @property
    def defined(self) -> bool:
        return not np.isnan(self.rel_l2)


@dataclass
class ErrorReport:
    rows: list[ErrorRow]

    def get(self, t: float, name: str) -> float:
        for r in self.rows:
            if r.field == name and r.t == t:
                return r.rel_l2
        raise KeyError((t, name))

    def series(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        sel = [r for r in self.rows if r.field == name]
        return np.array([r.t for r in sel]), np.array([r.rel_l2 for r in sel])


def _rel(pred, exact) -> float:
    denom = np.linalg.norm(exact)
    if denom == 0:
        return float("nan")
    return float(np.linalg.norm(pred - exact) / denom)


def relative_l2(pred: Mapping[float, Mapping[str, np.ndarray]],
                exact: Mapping[float, Mapping[str, np.ndarray]],
                align_pressure: bool = True,
                fields: Sequence[str] | None = None) -> ErrorReport:
    """Per-time relative L2 errors ``|pred - exact| / |exact|``.

    Both arguments map time to a dict of field arrays on the same points.
    With ``align_pressure`` the mean of ``pred_p - exact_p`` is removed from
    the prediction first.  A vanishing exact norm gives NaN (undefined).
    """
    if set(pred) != set(exact):
        raise ValueError("prediction and reference cover different times")
    rows = []
    for t in sorted(exact):
        names = fields or [k for k in ("c", "d", "u", "v", "w", "p") if k in exact[t] and k in pred[t]]
        for name in names:
            p = np.asarray(pred[t][name], dtype=float)
            e = np.asarray(exact[t][name], dtype=float)
            if p.shape != e.shape:
                raise ValueError(f"field {name} at t={t}: shapes {p.shape} and {e.shape} differ")
            aligned = name == "p" and align_pressure
            if aligned:
                p = p - np.mean(p - e)
            rows.append(ErrorRow(float(t), name, _rel(p, e), aligned))
    return ErrorReport(rows)


# --------------------------------------------------------------------------
# dense grids
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Tensor grid over a box: ``shape[i]`` nodes from ``lo[i]`` to ``hi[i]`` inclusive."""

    lo: tuple
    hi: tuple
    shape: tuple

    def __post_init__(self):
        if not (len(self.lo) == len(self.hi) == len(self.shape)) or len(self.lo) not in (2, 3):
            raise ValueError("grid needs matching lo/hi/shape of length 2 or 3")
        if any(int(n) < 1 for n in self.shape):
            raise ValueError("grid shape entries must be positive")
        if any(not np.isfinite(a) or not np.isfinite(b) or b < a for a, b in zip(self.lo, self.hi)):
            raise ValueError("grid bounds must be finite with lo <= hi")

    @property
    def dim(self) -> int:
        return len(self.lo)

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(a, b, int(n)) for a, b, n in zip(self.lo, self.hi, self.shape)]

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])


@dataclass
class GridPrediction:
    """Network outputs at every (time, grid node) pair, times outermost."""

    dim: int
    points: np.ndarray
    fields: dict
    extrapolated: bool

    @property
    def names(self) -> tuple:
        return VARIABLES[self.dim]

    def snapshots(self) -> dict[float, dict[str, np.ndarray]]:
        out = {}
        for t in np.unique(self.points[:, 0]):
            sel = self.points[:, 0] == t
            out[float(t)] = {k: v[sel] for k, v in self.fields.items()}
        return out


def evaluate_on_grid(checkpoint: Checkpoint, grid: GridSpec, times: Sequence[float]) -> GridPrediction:
    """Evaluate the network on a tensor grid at each time.

    Points outside the box seen in training are allowed; the result is
    flagged ``extrapolated`` when any exist.
    """
    if grid.dim != checkpoint.arch.dim:
        raise DimensionError(f"grid is {grid.dim}D, network is {checkpoint.arch.dim}D")
    times = np.asarray(times, dtype=float).reshape(-1)
    if times.size == 0 or not np.all(np.isfinite(times)):
        raise ValueError("need at least one finite time")
    space = grid.points()
    pts = np.column_stack([np.repeat(times, len(space)), np.tile(space, (len(times), 1))])
    lo, hi = checkpoint.norm.bounds()
    tol = 1e-12 * np.maximum(1.0, np.abs(hi - lo))
    extrapolated = bool(np.any(pts < lo - tol) or np.any(pts > hi + tol))
    out = forward(checkpoint.params, checkpoint.arch, checkpoint.norm, pts)
    fields = {name: out[:, j].copy() for j, name in enumerate(VARIABLES[grid.dim])}
    return GridPrediction(grid.dim, pts, fields, extrapolated)


# --------------------------------------------------------------------------
# writers
# --------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, str):
        return v
    return "%.17g" % v


def _write_csv(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_forces(series: ForceSeries, path) -> None:
    _write_csv(path, ["t", "FL", "FD"], zip(series.t, series.lift, series.drag))


def write_wss(wss: WssField, path) -> None:
    mag = wss.wss
    rows = []
    for i, t in enumerate(wss.t):
        for j, (x, y) in enumerate(wss.points):
            rows.append((t, x, y, wss.tau_x[i, j], wss.tau_y[i, j], mag[i, j]))
    _write_csv(path, ["t", "x", "y", "taux", "tauy", "wss"], rows)


def write_error_report(report: ErrorReport, path) -> None:
    _write_csv(path, ["t", "field", "rel_l2", "aligned"],
               ((r.t, r.field, r.rel_l2, r.aligned) for r in report.rows))


def read_error_report(path) -> ErrorReport:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            rows.append(ErrorRow(float(rec["t"]), rec["field"], float(rec["rel_l2"]),
                                 rec["aligned"] == "true"))
    return ErrorReport(rows)


def prediction_header(dim: int) -> list[str]:
    return ["t", "x", "y"] + (["z"] if dim == 3 else []) + list(VARIABLES[dim])


def write_prediction_csv(pred: GridPrediction, path) -> None:
    cols = [pred.fields[k] for k in pred.names]
    _write_csv(path, prediction_header(pred.dim), np.column_stack([pred.points, *cols]))


def write_prediction_npz(pred: GridPrediction, path) -> None:
    """Binary export; written uncompressed with fixed member order."""
    with open(path, "wb") as fh:
        np.savez(fh, points=pred.points, extrapolated=np.array(pred.extrapolated),
                 **{k: pred.fields[k] for k in pred.names})


def read_prediction_csv(path) -> GridPrediction:
    path = Path(path)
    with open(path, newline="") as fh:
        header = [h.strip() for h in fh.readline().split(",")]
    dim = 3 if "z" in header else 2
    if header != prediction_header(dim):
        raise FormatError(f"expected header {','.join(prediction_header(dim))!r}", path, 1)
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise FormatError(f"bad prediction data: {exc}", path) from None
    n_coord = dim + 1
    fields = {k: data[:, n_coord + j] for j, k in enumerate(VARIABLES[dim])}
    return GridPrediction(dim, data[:, :n_coord], fields, False)
