"""Command-line runs driven by an INI config file.

Every subcommand reads ``--config PATH``.  Relative paths inside the config
are resolved against the config file's directory.  Exit codes: 0 success,
2 invalid input, 3 training divergence, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from contextlib import nullcontext
from dataclasses import asdict
from pathlib import Path

import numpy as np

from hiddenflow import __version__
from hiddenflow.checkpoint import load_checkpoint
from hiddenflow.datagen import (
    AnalyticFlow,
    SolverConfig,
    export_dataset,
    grid_coordinates,
    import_dataset,
    sample_points,
    solve_transport,
)
from hiddenflow.errors import ConfigError, HiddenFlowError, TrainingDiverged
from hiddenflow.network import MlpArchitecture
from hiddenflow.postproc import (
    AnalyticFlowField,
    CallableField,
    GridPrediction,
    GridSpec,
    NetworkField,
    circle_surface,
    evaluate_on_grid,
    force_series,
    load_surface,
    read_prediction_csv,
    relative_l2,
    segment_surface,
    write_error_report,
    write_forces,
    write_prediction_csv,
    write_prediction_npz,
    write_wss,
    wss_series,
)
from hiddenflow.training import TrainConfig, TrainState, train

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4

SCHEMA: dict[str, set[str]] = {
    "run": {"seed"},
    "flow": {"variant", "re", "pec"},
    "solver": {"n", "dt", "kappa", "t_final", "snapshot_interval", "dealias", "initial_condition"},
    "sampling": {"count", "noise", "collocation"},
    "network": {"hidden_layers", "width", "activation"},
    "training": {"epochs", "learning_rates", "batch_size", "shuffle_seed", "beta1", "beta2",
                 "eps", "residual_points", "use_auxiliary", "train_re", "train_pec",
                 "re_guess", "pec_guess", "weights"},
    "grid": {"lo", "hi", "shape", "times", "reference"},
    "field": {"source", "u", "v", "p"},
    "surface": {"file", "shape", "points", "radius", "center", "closed", "start", "end", "normal"},
    "wall": {"file", "shape", "points", "radius", "center", "closed", "start", "end", "normal"},
    "paths": {"dataset", "collocation", "checkpoint", "log", "predictions", "predictions_npz",
              "report", "forces", "wss"},
}

log = logging.getLogger("hiddenflow")


# --------------------------------------------------------------------------
# config
# --------------------------------------------------------------------------

class RunConfig:
    """Strictly validated view of an INI file."""

    def __init__(self, parser: configparser.ConfigParser, base: Path, seed_override=None):
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            unknown = set(parser[section]) - SCHEMA[section]
            if unknown:
                raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
        self.cp = parser
        self.base = base
        self.seed = seed_override if seed_override is not None else self.get_int("run", "seed", 0)
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    @classmethod
    def load(cls, path, seed_override=None) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(path.read_text(), source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        return cls(parser, path.resolve().parent, seed_override)

    def has(self, section, key=None) -> bool:
        if key is None:
            return self.cp.has_section(section)
        return self.cp.has_option(section, key)

    def _raw(self, section, key, default):
        if self.cp.has_option(section, key):
            return self.cp.get(section, key).strip()
        if default is _REQUIRED:
            raise ConfigError(f"missing required key [{section}] {key}")
        return default

    def _convert(self, section, key, default, conv):
        raw = self._raw(section, key, default)
        if raw is default:
            return default
        try:
            return conv(raw)
        except ValueError:
            raise ConfigError(f"[{section}] {key} = {raw!r} is not valid") from None

    def get_str(self, section, key, default=None):
        return self._raw(section, key, _REQUIRED if default is _REQUIRED else default)

    def get_int(self, section, key, default=None):
        return self._convert(section, key, default, int)

    def get_float(self, section, key, default=None):
        return self._convert(section, key, default, float)

    def get_bool(self, section, key, default=None):
        def conv(raw):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return self._convert(section, key, default, conv)

    def get_floats(self, section, key, default=None):
        return self._convert(section, key, default,
                             lambda r: tuple(float(v) for v in r.split(",") if v.strip()))

    def get_ints(self, section, key, default=None):
        return self._convert(section, key, default,
                             lambda r: tuple(int(v) for v in r.split(",") if v.strip()))

    def path(self, key, must_exist=False, required=True) -> Path | None:
        raw = self._raw("paths", key, _REQUIRED if required else None)
        if raw is None:
            return None
        p = Path(raw)
        if not p.is_absolute():
            p = self.base / p
        if must_exist and not p.exists():
            raise ConfigError(f"[paths] {key}: {p} does not exist")
        return p

    def output(self, key, required=True) -> Path | None:
        p = self.path(key, required=required)
        if p is not None:
            try:
                p.parent.mkdir(parents=True, exist_ok=True)
            except OSError as exc:
                raise OSError(f"cannot create output directory {p.parent}: {exc}") from exc
        return p

    # -- typed sections ----------------------------------------------------

    def flow(self) -> AnalyticFlow:
        return AnalyticFlow(self.get_str("flow", "variant", "TaylorGreen2D"),
                            self.get_float("flow", "re", 10.0))

    def pec(self) -> float:
        return self.get_float("flow", "pec", 10.0)

    def solver(self) -> SolverConfig:
        return SolverConfig(
            n=self.get_int("solver", "n", 64),
            dt=self.get_float("solver", "dt", 0.01),
            kappa=self.get_float("solver", "kappa", 1.0 / self.pec()),
            t_final=self.get_float("solver", "t_final", 2.0),
            snapshot_interval=self.get_float("solver", "snapshot_interval", 0.05),
            dealias=self.get_bool("solver", "dealias", True),
            initial_condition=self.get_str("solver", "initial_condition", "mix"),
        )

    def architecture(self, dim: int) -> MlpArchitecture:
        return MlpArchitecture(dim, self.get_int("network", "hidden_layers", 10),
                               self.get_int("network", "width", 300),
                               self.get_str("network", "activation", "sin"))

    def training(self) -> TrainConfig:
        g = lambda k, d: self.get_bool("training", k, d)
        train_re, train_pec = g("train_re", False), g("train_pec", False)
        re = self.get_float("training", "re_guess", 1.0) if train_re else self.flow().re
        pec = self.get_float("training", "pec_guess", 1.0) if train_pec else self.pec()
        weights = {}
        raw = self.get_str("training", "weights", "")
        for item in filter(None, (s.strip() for s in raw.split(","))):
            name, _, val = item.partition(":")
            try:
                weights[name.strip()] = float(val)
            except ValueError:
                raise ConfigError(f"[training] weights entry {item!r} is not name:value") from None
        return TrainConfig(
            epochs=self.get_ints("training", "epochs", (250, 500, 250)),
            learning_rates=self.get_floats("training", "learning_rates", (1e-3, 1e-4, 1e-5)),
            batch_size=self.get_int("training", "batch_size", 10000),
            shuffle_seed=self.get_int("training", "shuffle_seed", self.seed),
            beta1=self.get_float("training", "beta1", 0.9),
            beta2=self.get_float("training", "beta2", 0.999),
            eps=self.get_float("training", "eps", 1e-8),
            residual_points=self.get_str("training", "residual_points", "same"),
            use_auxiliary=g("use_auxiliary", True),
            re=re, pec=pec, train_re=train_re, train_pec=train_pec, weights=weights,
        )

    def grid(self, dim: int) -> tuple[GridSpec, np.ndarray]:
        times = np.array(self.get_floats("grid", "times", _REQUIRED))
        lo = self.get_floats("grid", "lo", (0.0,) * dim)
        hi = self.get_floats("grid", "hi", _REQUIRED)
        shape = self.get_ints("grid", "shape", _REQUIRED)
        return GridSpec(lo, hi, shape), times

    def surface(self, section: str):
        if self.has(section, "file"):
            p = Path(self.get_str(section, "file"))
            p = p if p.is_absolute() else self.base / p
            if not p.exists():
                raise ConfigError(f"[{section}] file: {p} does not exist")
            return load_surface(p, closed=self.get_bool(section, "closed", section == "surface"))
        shape = self.get_str(section, "shape", "circle" if section == "surface" else "segment")
        if shape == "circle":
            return circle_surface(self.get_int(section, "points", 256),
                                  self.get_float(section, "radius", 1.0),
                                  self.get_floats(section, "center", (0.0, 0.0)))
        if shape == "segment":
            return segment_surface(self.get_floats(section, "start", _REQUIRED),
                                   self.get_floats(section, "end", _REQUIRED),
                                   self.get_int(section, "points", 101),
                                   self.get_floats(section, "normal", _REQUIRED))
        raise ConfigError(f"[{section}] shape must be 'circle' or 'segment', got {shape!r}")


_REQUIRED = object()


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def _collocation(cfg: RunConfig, solver: SolverConfig, count: int) -> np.ndarray:
    rng = np.random.default_rng([cfg.seed, 1])
    span = 2.0 * np.pi
    return np.column_stack([rng.uniform(0.0, solver.t_final, count),
                            rng.uniform(0.0, span, count), rng.uniform(0.0, span, count)])


def cmd_generate(cfg: RunConfig, args) -> int:
    flow, solver = cfg.flow(), cfg.solver()
    out = cfg.output("dataset")
    count = cfg.get_int("sampling", "count", 50000)
    n_colloc = cfg.get_int("sampling", "collocation", 0)
    colloc_path = cfg.output("collocation") if n_colloc else None
    solver.validate(flow)
    snaps = solve_transport(flow, solver)
    ds = sample_points(snaps, count, seed=cfg.seed, noise=cfg.get_float("sampling", "noise", 0.0))
    if n_colloc:
        ds.collocation = _collocation(cfg, solver, n_colloc)
    solver_meta = asdict(solver)
    if callable(solver_meta["initial_condition"]):
        solver_meta["initial_condition"] = "custom"
    ds.metadata = {"variant": flow.variant, "Re": flow.re, "Pec": cfg.pec(), "seed": cfg.seed,
                   "count": count, "noise": cfg.get_float("sampling", "noise", 0.0),
                   "solver": solver_meta, "version": __version__}
    export_dataset(ds, out, colloc_path)
    print(f"wrote {len(ds)} records to {out}")
    return EXIT_OK


def cmd_train(cfg: RunConfig, args) -> int:
    data = cfg.path("dataset", must_exist=True)
    colloc = cfg.path("collocation", must_exist=True, required=False)
    ckpt_path = cfg.output("checkpoint")
    log_path = cfg.output("log")
    dataset = import_dataset(data, colloc)
    arch = cfg.architecture(dataset.dim)
    tc = cfg.training()
    initial = None
    if args.resume is not None:
        ck = load_checkpoint(args.resume)
        if ck.arch != arch:
            raise ConfigError(f"checkpoint architecture {ck.arch} does not match config {arch}")
        initial = TrainState.from_checkpoint(ck)

    def report(rec):
        parts = " ".join(f"{k}={v:.4e}" for k, v in rec.loss.as_dict().items())
        print(f"epoch {rec.epoch} stage {rec.stage} lr {rec.lr:g} {parts} "
              f"Re={rec.re:.6g} Pec={rec.pec:.6g}", flush=True)

    state, _ = train(tc, arch, dataset, initial_state=initial, seed=cfg.seed,
                     checkpoint_path=ckpt_path, log_path=log_path, on_epoch=report)
    flow = state.flow
    print(f"final Re={flow.re:.6g} Pec={flow.pec:.6g}; checkpoint {ckpt_path}")
    return EXIT_OK


def _predict(cfg: RunConfig) -> tuple[GridPrediction, object]:
    ck = load_checkpoint(cfg.path("checkpoint", must_exist=True))
    grid, times = cfg.grid(ck.arch.dim)
    return evaluate_on_grid(ck, grid, times), ck


def cmd_predict(cfg: RunConfig, args) -> int:
    out = cfg.output("predictions")
    npz = cfg.output("predictions_npz", required=False)
    pred, _ = _predict(cfg)
    if pred.extrapolated:
        log.warning("grid extends beyond the training region; values are extrapolated")
    write_prediction_csv(pred, out)
    if npz is not None:
        write_prediction_npz(pred, npz)
    print(f"wrote {len(pred.points)} records to {out}")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, args) -> int:
    """Compare predictions (file or checkpoint on the grid) against the reference flow.

    With ``[grid] reference = solver`` the grid is the solver's periodic grid
    at the requested snapshot times and the concentration is compared too.
    """
    out = cfg.output("report")
    flow = cfg.flow()
    reference = cfg.get_str("grid", "reference", "analytic")
    if reference not in ("analytic", "solver"):
        raise ConfigError("[grid] reference must be 'analytic' or 'solver'")
    conc = {}
    if reference == "solver":
        solver = cfg.solver()
        times = np.array(cfg.get_floats("grid", "times", _REQUIRED))
        solver.validate(flow)
        snaps = {round(s.t, 12): s for s in solve_transport(flow, solver)}
        x = grid_coordinates(solver.n)
        grid = GridSpec((0.0, 0.0), (x[-1], x[-1]), (solver.n, solver.n))
        for t in times:
            if round(float(t), 12) not in snaps:
                raise ConfigError(f"t={t} is not a solver snapshot time")
            conc[float(t)] = snaps[round(float(t), 12)].values.ravel()
    if cfg.has("paths", "predictions"):
        pred = read_prediction_csv(cfg.path("predictions", must_exist=True))
    else:
        ck = load_checkpoint(cfg.path("checkpoint", must_exist=True))
        if reference == "analytic":
            grid, times = cfg.grid(ck.arch.dim)
        pred = evaluate_on_grid(ck, grid, times)
    pred_snaps = pred.snapshots()
    exact = {}
    for t, fields in pred_snaps.items():
        sel = pred.points[:, 0] == t
        space = pred.points[sel, 1:]
        z = space[:, 2] if pred.dim == 3 else None
        ref = flow.evaluate(t, space[:, 0], space[:, 1], z)
        exact[t] = {k: ref[k] for k in ("u", "v", "w", "p") if k in ref and k in fields}
        if t in conc:
            exact[t]["c"] = conc[t]
        pred_snaps[t] = {k: fields[k] for k in exact[t]}
    report = relative_l2(pred_snaps, exact, align_pressure=True)
    write_error_report(report, out)
    for r in report.rows:
        print(f"t={r.t:g} {r.field} rel_l2={r.rel_l2:.6g}{' (aligned)' if r.aligned else ''}")
    return EXIT_OK


def _field(cfg: RunConfig):
    source = cfg.get_str("field", "source", "checkpoint")
    if source == "checkpoint":
        ck = load_checkpoint(cfg.path("checkpoint", must_exist=True))
        return NetworkField(ck), ck.flow.re
    if source == "analytic":
        flow = cfg.flow()
        return AnalyticFlowField(flow), flow.re
    if source == "expression":
        return _expression_field(cfg), cfg.get_float("flow", "re", 1.0)
    raise ConfigError(f"[field] source must be checkpoint, analytic or expression, got {source!r}")


def _expression_field(cfg: RunConfig) -> CallableField:
    import sympy as sp

    from hiddenflow.autodiff import cos, exp, sin, tanh

    t, x, y = sp.symbols("t x y")
    fns = []
    for key in ("u", "v", "p"):
        text = cfg.get_str("field", key, "0")
        try:
            expr = sp.sympify(text, locals={"t": t, "x": x, "y": y})
        except (sp.SympifyError, TypeError) as exc:
            raise ConfigError(f"[field] {key} = {text!r}: {exc}") from None
        if expr.free_symbols - {t, x, y}:
            raise ConfigError(f"[field] {key} uses unknown symbols {expr.free_symbols - {t, x, y}}")
        fns.append(sp.lambdify((t, x, y), expr,
                               modules=[{"sin": sin, "cos": cos, "exp": exp, "tanh": tanh}]))
    return CallableField(lambda tt, xx, yy: tuple(f(tt, xx, yy) for f in fns))


def _times(cfg: RunConfig, section: str = "grid") -> np.ndarray:
    return np.array(cfg.get_floats(section, "times", (0.0,)))


def cmd_forces(cfg: RunConfig, args) -> int:
    out = cfg.output("forces")
    surface = cfg.surface("surface")
    field_, re = _field(cfg)
    series = force_series(field_, surface, re, _times(cfg))
    write_forces(series, out)
    for t, fl, fd in zip(series.t, series.lift, series.drag):
        print(f"t={t:g} FL={fl:.12g} FD={fd:.12g}")
    return EXIT_OK


def cmd_wss(cfg: RunConfig, args) -> int:
    out = cfg.output("wss")
    wall = cfg.surface("wall")
    field_, re = _field(cfg)
    wss = wss_series(field_, wall, re, _times(cfg))
    write_wss(wss, out)
    print(f"wrote {wss.tau_x.size} wall samples to {out}; max WSS {np.max(wss.wss):.6g}")
    return EXIT_OK


COMMANDS = {
    "generate": (cmd_generate, "solve the transport equation and sample observations"),
    "train": (cmd_train, "fit the network to a dataset"),
    "predict": (cmd_predict, "evaluate a checkpoint on a dense grid"),
    "evaluate": (cmd_evaluate, "relative L2 errors against the reference flow"),
    "forces": (cmd_forces, "lift and drag on a closed surface"),
    "wss": (cmd_wss, "wall shear stress along a wall"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hiddenflow",
        description="Infer hidden velocity and pressure from passive-scalar observations.",
    )
    parser.add_argument("--version", action="version", version=f"hiddenflow {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH", help="INI run configuration")
    common.add_argument("--seed", type=int, metavar="U64", help="override [run] seed")
    common.add_argument("--threads", type=int, metavar="N", help="cap numerical worker threads")
    common.add_argument("--resume", metavar="PATH", help="checkpoint to continue training from")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (_, help_) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_, description=help_)
    return parser


def _thread_limit(n):
    if n is None:
        return nullcontext()
    if n < 1:
        raise ConfigError("--threads must be at least 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    fn = COMMANDS[args.command][0]
    try:
        cfg = RunConfig.load(args.config, args.seed)
        with _thread_limit(args.threads):
            return fn(cfg, args)
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, ValueError, HiddenFlowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
