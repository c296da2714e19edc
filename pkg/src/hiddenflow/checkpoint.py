"""Binary checkpoints with a JSON sidecar.

Layout (all little-endian)::

    magic "HFMC" | u32 version | u32 dim | u32 hidden_layers | u32 width
    u32 activation (0 sin, 1 tanh) | u32 n_outputs
    f64[dim+1] scale | f64[dim+1] shift
    u32 flow mode (bit 0: Re trainable, bit 1: Pec trainable) | f64 Re | f64 Pec
    u64 optimizer step | u64 n_params | u64 n_moments
    f64[n_params] parameters | f64[n_moments] first moments | f64[n_moments] second moments

``n_moments`` is zero when no optimizer state is stored.  ``path + ".json"``
repeats every header field in readable form.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from hiddenflow.errors import FormatError
from hiddenflow.network import InputNormalization, MlpArchitecture, MlpParams
from hiddenflow.physics import FlowParams

MAGIC = b"HFMC"
VERSION = 1
_ACTIVATION_CODES = {"sin": 0, "tanh": 1}
_HEAD = struct.Struct("<4sIIIIII")
_FLOW = struct.Struct("<Idd")
_COUNTS = struct.Struct("<QQQ")


@dataclass
class Checkpoint:
    arch: MlpArchitecture
    params: MlpParams
    norm: InputNormalization
    flow: FlowParams
    step: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None

    def header(self) -> dict:
        return {
            "magic": MAGIC.decode(),
            "version": VERSION,
            "dim": self.arch.dim,
            "hidden_layers": self.arch.hidden_layers,
            "width": self.arch.width,
            "activation": self.arch.activation,
            "n_outputs": self.arch.n_outputs,
            "scale": self.norm.scale.tolist(),
            "shift": self.norm.shift.tolist(),
            "train_re": self.flow.train_re,
            "train_pec": self.flow.train_pec,
            "Re": self.flow.re,
            "Pec": self.flow.pec,
            "step": self.step,
            "n_params": self.params.count,
            "n_moments": 0 if self.m is None else int(self.m.size),
        }


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    path = Path(path)
    arch = ckpt.arch
    mode = int(ckpt.flow.train_re) | (int(ckpt.flow.train_pec) << 1)
    n_mom = 0 if ckpt.m is None else ckpt.m.size
    if n_mom and (ckpt.v is None or ckpt.v.size != n_mom):
        raise ValueError("first and second moments must have equal length")
    parts = [
        _HEAD.pack(MAGIC, VERSION, arch.dim, arch.hidden_layers, arch.width,
                   _ACTIVATION_CODES[arch.activation], arch.n_outputs),
        np.asarray(ckpt.norm.scale, "<f8").tobytes(),
        np.asarray(ckpt.norm.shift, "<f8").tobytes(),
        _FLOW.pack(mode, ckpt.flow.re, ckpt.flow.pec),
        _COUNTS.pack(ckpt.step, ckpt.params.count, n_mom),
        np.asarray(ckpt.params.theta, "<f8").tobytes(),
    ]
    if n_mom:
        parts += [np.asarray(ckpt.m, "<f8").tobytes(), np.asarray(ckpt.v, "<f8").tobytes()]
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(b"".join(parts))
    tmp.replace(path)
    sidecar_path(path).write_text(json.dumps(ckpt.header(), indent=2) + "\n")


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    raw = path.read_bytes()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(raw):
            raise FormatError(f"truncated checkpoint at byte {pos}", path)
        chunk = raw[pos:pos + n]
        pos += n
        return chunk

    magic, version, dim, hidden, width, act, n_out = _HEAD.unpack(take(_HEAD.size))
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", path)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", path)
    activation = {v: k for k, v in _ACTIVATION_CODES.items()}.get(act)
    if activation is None:
        raise FormatError(f"unknown activation code {act}", path)
    arch = MlpArchitecture(dim, hidden, width, activation)
    if arch.n_outputs != n_out:
        raise FormatError("output arity does not match the architecture", path)
    scale = np.frombuffer(take(8 * (dim + 1)), "<f8").astype(float)
    shift = np.frombuffer(take(8 * (dim + 1)), "<f8").astype(float)
    mode, re, pec = _FLOW.unpack(take(_FLOW.size))
    step, n_params, n_mom = _COUNTS.unpack(take(_COUNTS.size))
    if n_params != arch.n_params:
        raise FormatError(f"{n_params} parameters stored, architecture needs {arch.n_params}", path)
    theta = np.frombuffer(take(8 * n_params), "<f8").astype(float)
    m = v = None
    if n_mom:
        m = np.frombuffer(take(8 * n_mom), "<f8").astype(float)
        v = np.frombuffer(take(8 * n_mom), "<f8").astype(float)
    if pos != len(raw):
        raise FormatError(f"{len(raw) - pos} trailing bytes", path)
    flow = FlowParams(re, pec, bool(mode & 1), bool(mode & 2))
    return Checkpoint(arch, MlpParams(arch, theta), InputNormalization(scale, shift), flow, step, m, v)
