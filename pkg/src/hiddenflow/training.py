"""Composite data + residual loss, Adam, and the staged training schedule."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from hiddenflow.autodiff import Tape, exp, reverse_gradient
from hiddenflow.checkpoint import Checkpoint, save_checkpoint
from hiddenflow.dataset import SampledDataset
from hiddenflow.errors import ContractError, TrainingDiverged
from hiddenflow.network import (
    InputNormalization,
    MlpArchitecture,
    MlpParams,
    initialize,
    propagate,
)
from hiddenflow.network.stacked import stacked_jet
from hiddenflow.physics import FlowParams, residuals

log = logging.getLogger(__name__)

COMPONENTS = ("data_c", "data_d", "e1", "e2", "e3", "e4", "e5", "e6")
LOG_HEADER = ["epoch", "stage", "lr", "total", *COMPONENTS, "Re", "Pec"]


@dataclass
class TrainConfig:
    epochs: tuple = (250, 500, 250)
    learning_rates: tuple = (1e-3, 1e-4, 1e-5)
    batch_size: int = 10000
    shuffle_seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    residual_points: str = "same"
    use_auxiliary: bool = True
    re: float | None = None
    pec: float | None = None
    train_re: bool = False
    train_pec: bool = False
    weights: dict = field(default_factory=dict)

    def __post_init__(self):
        self.epochs = tuple(int(e) for e in self.epochs)
        self.learning_rates = tuple(float(r) for r in self.learning_rates)
        if len(self.epochs) != len(self.learning_rates):
            raise ValueError("need one learning rate per stage")
        if any(e < 0 for e in self.epochs):
            raise ValueError("epoch counts must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")
        if self.residual_points not in ("same", "separate"):
            raise ValueError("residual_points must be 'same' or 'separate'")
        unknown = set(self.weights) - set(COMPONENTS)
        if unknown:
            raise ValueError(f"unknown loss terms in weights: {sorted(unknown)}")

    def weight(self, name: str) -> float:
        return float(self.weights.get(name, 1.0))

    def initial_flow(self) -> FlowParams:
        re = self.re if self.re is not None else (1.0 if self.train_re else None)
        pec = self.pec if self.pec is not None else (1.0 if self.train_pec else None)
        if re is None or pec is None:
            raise ValueError("fixed Re and Pec need explicit values")
        return FlowParams(re, pec, self.train_re, self.train_pec)


@dataclass
class LossBreakdown:
    data_c: float = 0.0
    data_d: float = 0.0
    e1: float = 0.0
    e2: float = 0.0
    e3: float = 0.0
    e4: float = 0.0
    e5: float = 0.0
    e6: float = 0.0
    total: float = 0.0

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class EpochRecord:
    epoch: int
    stage: int
    lr: float
    loss: LossBreakdown
    re: float
    pec: float

    def row(self) -> list:
        d = self.loss.as_dict()
        return [self.epoch, self.stage, self.lr, d["total"], *(d[k] for k in COMPONENTS),
                self.re, self.pec]


@dataclass
class TrainState:
    """Everything needed to continue optimisation.

    The optimiser works on one vector: the network parameters followed by the
    log-Reynolds and log-Peclet exponents that are trainable.
    """

    params: MlpParams
    norm: InputNormalization
    log_flow: np.ndarray
    trainable: tuple
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    history: list = field(default_factory=list)

    @classmethod
    def fresh(cls, params: MlpParams, norm: InputNormalization, flow: FlowParams) -> "TrainState":
        n = params.count + sum(flow.trainable)
        return cls(params, norm, np.array([flow.s_re, flow.s_pec]), flow.trainable,
                   np.zeros(n), np.zeros(n))

    @property
    def flow(self) -> FlowParams:
        return FlowParams(math.exp(self.log_flow[0]), math.exp(self.log_flow[1]), *self.trainable)

    @property
    def n_optimized(self) -> int:
        return self.params.count + sum(self.trainable)

    def copy(self) -> "TrainState":
        return TrainState(self.params.copy(), self.norm, self.log_flow.copy(), self.trainable,
                          self.m.copy(), self.v.copy(), self.step, list(self.history))

    def checkpoint(self) -> Checkpoint:
        return Checkpoint(self.params.arch, self.params, self.norm, self.flow, self.step,
                          self.m, self.v)

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint) -> "TrainState":
        state = cls.fresh(ckpt.params.copy(), ckpt.norm, ckpt.flow)
        if ckpt.m is not None and ckpt.m.size == state.m.size:
            state.m, state.v, state.step = ckpt.m.copy(), ckpt.v.copy(), ckpt.step
        return state


class _TapeFlow:
    def __init__(self, inv_re, inv_pec):
        self.inv_re = inv_re
        self.inv_pec = inv_pec


class LossProgram:
    """The composite loss recorded once on a tape and replayed per batch."""

    def __init__(self, arch: MlpArchitecture, norm: InputNormalization, config: TrainConfig,
                 trainable: tuple = (False, False)):
        self.arch = arch
        self.norm = norm
        self.config = config
        self.trainable = tuple(trainable)
        self.tape: Tape | None = None

    def _record(self, layers, log_flow, X, c, Xr):
        cfg = self.config
        tape = Tape()
        self.tape = tape
        self.layer_leaves = [(tape.leaf(W), tape.leaf(b)) for W, b in layers]
        self.flow_leaves = [tape.leaf(s, requires_grad=t) for s, t in zip(log_flow, self.trainable)]
        self.x_leaf = tape.leaf(X, requires_grad=False)
        self.c_leaf = tape.leaf(c, requires_grad=False)
        self.xr_leaf = tape.leaf(Xr, requires_grad=False) if Xr is not None else None

        s_re, s_pec = self.flow_leaves
        fp = _TapeFlow(exp(-s_re), exp(-s_pec))
        norm, act, dim = self.norm, self.arch.activation, self.arch.dim

        def jet_at(xv):
            return stacked_jet(self.layer_leaves, act, xv, norm.scale, norm.shift, dim)

        if self.xr_leaf is None:
            jet = jet_at(self.x_leaf)
            c_pred, d_pred = jet.c, jet.d
        else:
            out = propagate(self.layer_leaves, act, self.x_leaf * norm.scale + norm.shift)
            c_pred, d_pred = out[:, 0], out[:, 1]
            jet = jet_at(self.xr_leaf)

        res = residuals(jet, fp)
        per_point = {"data_c": c_pred - self.c_leaf}
        if cfg.use_auxiliary:
            per_point["data_d"] = d_pred - (1.0 - self.c_leaf)
        for name, e in res.items():
            if name == "e2" and not cfg.use_auxiliary:
                continue
            per_point[name] = e
        self.per_point = per_point
        self.terms = {k: (v * v).mean() for k, v in per_point.items()}
        total = None
        for k, term in self.terms.items():
            w = cfg.weight(k)
            weighted = term if w == 1.0 else term * w
            total = weighted if total is None else total + weighted
        self.total = total
        self.params = [v for pair in self.layer_leaves for v in pair]
        self.params += [leaf for leaf, t in zip(self.flow_leaves, self.trainable) if t]

    def evaluate(self, params: MlpParams, log_flow, X, c, Xr=None):
        """Loss breakdown and flat gradient (network parameters, then trainable exponents)."""
        if (Xr is None) != (self.config.residual_points == "same"):
            raise ContractError("collocation batch must be given exactly when residual points are separate")
        # overflow shows up as a non-finite loss or gradient and is raised below
        with np.errstate(over="ignore", invalid="ignore"):
            return self._evaluate(params.layers, log_flow, X, c, Xr)

    def _evaluate(self, layers, log_flow, X, c, Xr):
        if self.tape is None:
            self._record(layers, log_flow, X, c, Xr)
        else:
            leaves = [(leaf, val) for pair, vals in zip(self.layer_leaves, layers)
                      for leaf, val in zip(pair, vals)]
            leaves += list(zip(self.flow_leaves, log_flow))
            leaves += [(self.x_leaf, X), (self.c_leaf, c)]
            if Xr is not None:
                leaves.append((self.xr_leaf, Xr))
            self.tape.replay(leaves)
        breakdown = LossBreakdown(**{k: float(v.value) for k, v in self.terms.items()})
        breakdown.total = float(self.total.value)
        if not math.isfinite(breakdown.total):
            raise TrainingDiverged(f"non-finite loss {breakdown.total}", point=self._first_bad_point())
        grad = reverse_gradient(self.tape, self.total, self.params).gradient
        return breakdown, grad

    def _first_bad_point(self):
        bad = None
        for v in self.per_point.values():
            idx = np.flatnonzero(~np.isfinite(np.ravel(v.value)))
            if idx.size:
                bad = int(idx[0]) if bad is None else min(bad, int(idx[0]))
        return bad


def batch_loss(state: TrainState, arch: MlpArchitecture, points, c, config: TrainConfig,
               collocation=None, program: LossProgram | None = None):
    """Loss breakdown of one batch and its gradient with respect to the optimised vector."""
    if len(points) == 0:
        raise ValueError("empty batch")
    if program is None:
        program = LossProgram(arch, state.norm, config, state.trainable)
    return program.evaluate(state.params, state.log_flow, np.asarray(points, float),
                            np.asarray(c, float), collocation)


def adam_step(state: TrainState, gradient: np.ndarray, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> TrainState:
    """Bias-corrected Adam update applied in place; returns ``state``."""
    g = np.asarray(gradient, dtype=float)
    if g.shape != state.m.shape:
        raise ContractError(f"gradient has {g.size} entries, optimiser tracks {state.m.size}")
    if not np.all(np.isfinite(g)):
        raise TrainingDiverged("non-finite gradient", state=state)
    state.step += 1
    t = state.step
    state.m *= beta1
    state.m += (1.0 - beta1) * g
    state.v *= beta2
    state.v += (1.0 - beta2) * (g * g)
    m_hat = state.m / (1.0 - beta1**t)
    v_hat = state.v / (1.0 - beta2**t)
    delta = lr * m_hat / (np.sqrt(v_hat) + eps)
    n = state.params.count
    state.params.theta -= delta[:n]
    k = n
    for i, trainable in enumerate(state.trainable):
        if trainable:
            state.log_flow[i] -= delta[k]
            k += 1
    return state


def _epoch_batches(n: int, batch: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    return [perm[i:i + batch] for i in range(0, n, batch)]


class TrainingLog:
    """Per-epoch CSV writer (header written immediately)."""

    def __init__(self, path):
        self.path = Path(path)
        with open(self.path, "w", newline="") as fh:
            csv.writer(fh).writerow(LOG_HEADER)

    def append(self, rec: EpochRecord) -> None:
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh).writerow([repr(x) if isinstance(x, float) else x for x in rec.row()])


def train(config: TrainConfig, arch: MlpArchitecture, dataset: SampledDataset,
          initial_state: TrainState | None = None, seed: int = 0,
          checkpoint_path=None, log_path=None,
          on_epoch: Callable[[EpochRecord], None] | None = None) -> tuple[TrainState, list]:
    """Run the staged Adam schedule.

    Each epoch is a seeded permutation of the data split into mini-batches,
    one optimiser step per batch.  Returns the final state and a list of
    :class:`EpochRecord`.  A checkpoint is written at the end of every stage
    when ``checkpoint_path`` is given.
    """
    if dataset.dim != arch.dim:
        raise ContractError(f"dataset is {dataset.dim}D, architecture is {arch.dim}D")
    if config.residual_points == "separate" and dataset.collocation is None:
        raise ContractError("separate residual points requested but dataset has none")
    if initial_state is None:
        norm = InputNormalization.from_points(dataset.bounding_points())
        state = TrainState.fresh(initialize(arch, seed), norm, config.initial_flow())
    else:
        if initial_state.params.arch != arch:
            raise ContractError("checkpoint architecture does not match the requested one")
        state = initial_state.copy()

    program = LossProgram(arch, state.norm, config, state.trainable)
    rng = np.random.default_rng(config.shuffle_seed)
    writer = TrainingLog(log_path) if log_path is not None else None
    records: list[EpochRecord] = []
    n = len(dataset)
    n_batches = math.ceil(n / config.batch_size)
    colloc = dataset.collocation if config.residual_points == "separate" else None
    epoch = len(state.history)

    for stage, (n_epochs, lr) in enumerate(zip(config.epochs, config.learning_rates), start=1):
        for _ in range(n_epochs):
            epoch += 1
            sums = dict.fromkeys(LossBreakdown().as_dict(), 0.0)
            batches = _epoch_batches(n, config.batch_size, rng)
            if colloc is not None:
                cb = math.ceil(len(colloc) / n_batches)
                colloc_batches = _epoch_batches(len(colloc), cb, rng)
            for b, idx in enumerate(batches):
                xr = colloc[colloc_batches[b]] if colloc is not None else None
                try:
                    br, grad = program.evaluate(state.params, state.log_flow,
                                                dataset.points[idx], dataset.c[idx], xr)
                    adam_step(state, grad, lr, config.beta1, config.beta2, config.eps)
                except TrainingDiverged as exc:
                    exc.state = state
                    log.error("training diverged in epoch %d: %s", epoch, exc)
                    raise
                for k, val in br.as_dict().items():
                    sums[k] += val * len(idx)
            loss = LossBreakdown(**{k: v / n for k, v in sums.items()})
            flow = state.flow
            rec = EpochRecord(epoch, stage, lr, loss, flow.re, flow.pec)
            records.append(rec)
            state.history.append(loss)
            if writer is not None:
                writer.append(rec)
            if on_epoch is not None:
                on_epoch(rec)
            log.info("epoch %d stage %d lr %.1e total %.4e", epoch, stage, lr, loss.total)
        if checkpoint_path is not None and n_epochs > 0:
            save_checkpoint(checkpoint_path, state.checkpoint())
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, state.checkpoint())
    return state, records


def infer_flow_parameters(config: TrainConfig, arch: MlpArchitecture, dataset: SampledDataset,
                          **kwargs) -> tuple[FlowParams, np.ndarray, TrainState]:
    """Train with Re and/or Pec as free parameters.

    Returns the learned parameters, the per-epoch (Re, Pec) trajectory and
    the final state.
    """
    if not (config.train_re or config.train_pec):
        raise ValueError("no flow parameter is marked trainable")
    for guess in (config.re, config.pec):
        if guess is not None and not guess > 0:
            raise ValueError("initial guesses must be positive")
    state, records = train(config, arch, dataset, **kwargs)
    trajectory = np.array([[r.re, r.pec] for r in records]).reshape(-1, 2)
    return state.flow, trajectory, state
