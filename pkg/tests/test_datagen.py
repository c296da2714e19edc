import json
import math

import numpy as np
import pytest

from hiddenflow.datagen import (
    AnalyticFlow,
    GridField2D,
    SampledDataset,
    SolverConfig,
    analytic_eval,
    export_dataset,
    grid_coordinates,
    import_dataset,
    initial_field,
    sample_points,
    solve_transport,
    spectral_roundtrip_error,
)
from hiddenflow.errors import CFLViolation, FormatError


# -- analytic flows -----------------------------------------------------------

def test_taylor_green_point_values():
    flow = AnalyticFlow("TaylorGreen2D", 10.0)
    f = analytic_eval(flow, 0.0, 0.0, 0.0)
    assert (float(f["u"]), float(f["v"]), float(f["p"])) == pytest.approx((0.0, 0.0, -0.5), abs=1e-15)
    f = analytic_eval(flow, 0.0, np.pi / 2, 0.0)
    assert (float(f["u"]), float(f["v"]), float(f["p"])) == pytest.approx((0.0, 1.0, 0.0), abs=1e-15)


def test_taylor_green_decay_rate():
    flow = AnalyticFlow("TaylorGreen2D", 4.0)
    a = analytic_eval(flow, 0.0, 0.3, 0.9)
    b = analytic_eval(flow, 1.0, 0.3, 0.9)
    assert float(b["v"] / a["v"]) == pytest.approx(math.exp(-2.0 / 4.0), rel=1e-14)
    assert float(b["u_t"]) == pytest.approx(-0.5 * float(b["u"]), rel=1e-13)


def test_unknown_variant_rejected():
    with pytest.raises(ValueError):
        AnalyticFlow("Poiseuille", 1.0)


def test_three_dimensional_flow_needs_z():
    flow = AnalyticFlow("Beltrami3D", 1.0)
    with pytest.raises(ValueError):
        analytic_eval(flow, 0.0, 0.1, 0.2)
    assert set(analytic_eval(flow, 0.0, 0.1, 0.2, 0.3)) >= {"w", "w_z", "u_zz"}


# -- transport solver ---------------------------------------------------------

def _grid(n):
    x = grid_coordinates(n)
    return np.meshgrid(x, x, indexing="ij")


def test_diffusion_eigenmode_decay():
    cfg = SolverConfig(n=32, dt=0.01, kappa=0.1, t_final=1.0, snapshot_interval=1.0,
                       initial_condition="mode")
    snaps = solve_transport(AnalyticFlow("Quiescent2D", 1.0), cfg)
    X, Y = _grid(32)
    assert snaps[-1].t == pytest.approx(1.0)
    assert np.max(np.abs(snaps[-1].values - math.exp(-0.2) * np.sin(X) * np.sin(Y))) < 1e-8


def test_traveling_wave_advection():
    cfg = SolverConfig(n=64, dt=0.01, kappa=0.0, t_final=1.0, snapshot_interval=0.5,
                       initial_condition="wave")
    snaps = solve_transport(AnalyticFlow("Uniform2D", 1.0), cfg)
    X, _ = _grid(64)
    assert np.max(np.abs(snaps[-1].values - 0.5 * (1 + np.sin(X - 1.0)))) < 1e-6


def test_spectral_convergence_under_refinement():
    ic = lambda X, Y: 1.0 / (2.0 + np.sin(X))
    errors = []
    for n in (8, 16, 32):
        cfg = SolverConfig(n=n, dt=0.005, kappa=0.0, t_final=0.5, snapshot_interval=0.5,
                           initial_condition=ic)
        snaps = solve_transport(AnalyticFlow("Uniform2D", 1.0), cfg)
        X, Y = _grid(n)
        errors.append(np.max(np.abs(snaps[-1].values - ic(X - 0.5, Y))))
    assert errors[0] > 10 * errors[1] > 100 * errors[2]


def test_taylor_green_conservation_and_bounds():
    cfg = SolverConfig(n=64, dt=0.01, kappa=0.1, t_final=2.0, snapshot_interval=0.05)
    snaps = solve_transport(AnalyticFlow("TaylorGreen2D", 10.0), cfg)
    assert len(snaps) == 41
    c0 = snaps[0].values
    means = np.array([s.values.mean() for s in snaps])
    assert np.max(np.abs(means - means[0])) < 1e-10
    for s in snaps:
        assert s.values.min() >= c0.min() - 1e-6
        assert s.values.max() <= c0.max() + 1e-6


def test_energy_decay_without_flow():
    cfg = SolverConfig(n=32, dt=0.01, kappa=0.05, t_final=1.0, snapshot_interval=0.1,
                       initial_condition=lambda X, Y: 0.5 + 0.2 * np.sin(3 * X) * np.cos(Y))
    snaps = solve_transport(AnalyticFlow("Quiescent2D", 1.0), cfg)
    energy = [np.linalg.norm(s.values - s.values.mean()) for s in snaps]
    assert all(b <= a for a, b in zip(energy, energy[1:]))


def test_cfl_bounds_rejected():
    flow = AnalyticFlow("TaylorGreen2D", 10.0)
    with pytest.raises(CFLViolation, match="advective"):
        SolverConfig(n=64, dt=0.1, kappa=0.0).validate(flow)
    with pytest.raises(CFLViolation, match="diffusive"):
        SolverConfig(n=64, dt=0.04, kappa=1.0, snapshot_interval=0.08).validate(flow)


def test_invalid_solver_settings():
    flow = AnalyticFlow("TaylorGreen2D", 10.0)
    with pytest.raises(ValueError):
        SolverConfig(n=48).validate(flow)
    with pytest.raises(ValueError):
        SolverConfig(snapshot_interval=0.015).validate(flow)
    with pytest.raises(ValueError):
        SolverConfig().validate(AnalyticFlow("Stagnation2D", 1.0))


def test_spectral_roundtrip():
    rng = np.random.default_rng(0)
    assert spectral_roundtrip_error(rng.normal(size=(64, 64))) < 1e-12
    assert spectral_roundtrip_error(initial_field("mix", 32)) < 1e-12


# -- sampling -----------------------------------------------------------------

def _snapshots():
    X, Y = _grid(8)
    return [GridField2D(0.5 + 0.1 * t * np.sin(X) * np.cos(Y), t) for t in (0.0, 0.5, 1.0)]


def test_sampled_values_are_grid_values():
    snaps = _snapshots()
    ds = sample_points(snaps, 50, seed=4)
    coords = grid_coordinates(8)
    for (t, x, y), c in zip(ds.points, ds.c):
        s = next(s for s in snaps if s.t == t)
        i, j = np.flatnonzero(coords == x)[0], np.flatnonzero(coords == y)[0]
        assert s.values[i, j] == c


def test_sampling_deterministic_and_distinct():
    snaps = _snapshots()
    a, b = sample_points(snaps, 100, seed=1), sample_points(snaps, 100, seed=1)
    assert np.array_equal(a.points, b.points) and np.array_equal(a.c, b.c)
    assert len({tuple(p) for p in a.points}) == 100


def test_sampling_noise_statistics():
    X, _ = _grid(16)
    snaps = [GridField2D(np.full_like(X, 0.5), 0.0)]
    ds = sample_points(snaps, 100_000, seed=0, noise=0.01)
    assert 0.009 <= ds.c.std() <= 0.011
    assert np.allclose(ds.d, 1.0 - ds.c)


def test_sampling_errors():
    with pytest.raises(ValueError):
        sample_points([], 5)
    with pytest.raises(ValueError):
        sample_points(_snapshots(), 0)


# -- dataset files ------------------------------------------------------------

def test_export_import_roundtrip(tmp_path):
    ds = sample_points(_snapshots(), 40, seed=2)
    ds.c = ds.c + 1e-17 * np.arange(40)
    ds.metadata = {"variant": "TaylorGreen2D", "Re": 10.0, "seed": 2}
    ds.collocation = np.random.default_rng(0).uniform(size=(5, 3))
    path = tmp_path / "data.csv"
    export_dataset(ds, path, tmp_path / "colloc.csv")
    back = import_dataset(path, tmp_path / "colloc.csv")
    assert np.array_equal(back.points, ds.points)
    assert np.array_equal(back.c, ds.c)
    assert np.array_equal(back.collocation, ds.collocation)
    assert back.metadata == ds.metadata
    assert json.loads((tmp_path / "data.json").read_text())["Re"] == 10.0


def test_handwritten_csv(tmp_path):
    path = tmp_path / "three.csv"
    path.write_text("t,x,y,c\n0,0,0,0.5\n0.1,1.5,2.5,0.25\n1,3,4,1\n")
    ds = import_dataset(path)
    assert ds.points.tolist() == [[0, 0, 0], [0.1, 1.5, 2.5], [1, 3, 4]]
    assert ds.c.tolist() == [0.5, 0.25, 1.0]
    assert ds.dim == 2


def test_empty_and_malformed_files(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("t,x,y,c\n")
    with pytest.raises(FormatError):
        import_dataset(empty)
    bad = tmp_path / "bad.csv"
    bad.write_text("t,x,y,c\n0,0,0,0.5\n0,1,oops,0.5\n")
    with pytest.raises(FormatError, match=r"bad\.csv:3:"):
        import_dataset(bad)
    header = tmp_path / "header.csv"
    header.write_text("t,x,c\n0,0,0\n")
    with pytest.raises(FormatError, match=":1:"):
        import_dataset(header)


def test_dataset_validation():
    with pytest.raises(ValueError):
        SampledDataset(np.zeros((2, 3)), np.zeros(3))
    with pytest.raises(ValueError):
        SampledDataset(np.array([[0, np.nan, 0]]), [0.5])
