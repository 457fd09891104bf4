"""Versioned single-file checkpoints.

Layout: 8-byte magic, little-endian u32 format version, u64 header length,
a UTF-8 JSON header (sorted keys, no timestamps), then each tensor's raw
little-endian bytes in header order.  Identical training runs therefore
produce byte-identical files.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Vocabulary
from .model import ModelConfig, ModelParams, init_params
from .training import AdaDeltaState, TrainState

MAGIC = b"SYNMTCK\x00"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    params: ModelParams
    vocabs: dict[str, Vocabulary | None] = field(default_factory=dict)
    optimizer: AdaDeltaState | None = None
    rng_state: dict | None = None
    epoch: int = 0
    updates: int = 0
    best_dev: float | None = None
    run_config: dict | None = None

    def train_state(self) -> TrainState:
        rng = np.random.default_rng()
        if self.rng_state is not None:
            rng.bit_generator.state = self.rng_state
        opt = self.optimizer or AdaDeltaState.for_params(self.params)
        return TrainState(self.params, opt, rng, self.epoch, self.updates, self.best_dev)


def from_train_state(state: TrainState, vocabs=None, run_config=None) -> Checkpoint:
    return Checkpoint(
        state.params,
        dict(vocabs or {}),
        state.optimizer,
        state.rng.bit_generator.state,
        state.epoch,
        state.updates,
        state.best_dev,
        run_config,
    )


def _arrays(ckpt: Checkpoint) -> list[tuple[str, np.ndarray]]:
    out = [(f"param/{k}", t.data) for k, t in sorted(ckpt.params.items())]
    if ckpt.optimizer is not None:
        for k in sorted(ckpt.optimizer.sq_grad):
            out.append((f"sq_grad/{k}", ckpt.optimizer.sq_grad[k]))
            out.append((f"sq_delta/{k}", ckpt.optimizer.sq_delta[k]))
    return out


def to_bytes(ckpt: Checkpoint) -> bytes:
    arrays = _arrays(ckpt)
    chunks, table, offset = [], [], 0
    for name, arr in arrays:
        raw = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes()
        table.append({"name": name, "shape": list(arr.shape), "dtype": arr.dtype.newbyteorder("<").str, "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    opt = ckpt.optimizer
    header = {
        "config": asdict(ckpt.params.config),
        "vocabs": {k: (v.to_list() if v is not None else None) for k, v in sorted(ckpt.vocabs.items())},
        "tensors": table,
        "optimizer": None if opt is None else {"rho": opt.rho, "eps": opt.eps},
        "rng_state": ckpt.rng_state,
        "epoch": ckpt.epoch,
        "updates": ckpt.updates,
        "best_dev": ckpt.best_dev,
        "run_config": ckpt.run_config,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _PREFIX.pack(MAGIC, VERSION, len(blob)) + blob + b"".join(chunks)


def save(ckpt: Checkpoint, path) -> Path:
    """Write atomically (temp file then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(to_bytes(ckpt))
    os.replace(tmp, path)
    return path


def from_bytes(data: bytes) -> Checkpoint:
    if len(data) < _PREFIX.size:
        raise CheckpointError("checkpoint truncated")
    magic, version, n = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    start = _PREFIX.size + n
    header = json.loads(data[_PREFIX.size : start].decode("utf-8"))
    config = ModelConfig(**header["config"])
    arrays = {}
    for entry in header["tensors"]:
        dt = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        lo = start + entry["offset"]
        if lo + count * dt.itemsize > len(data):
            raise CheckpointError(f"checkpoint truncated in {entry['name']}")
        arr = np.frombuffer(data, dtype=dt, count=count, offset=lo).reshape(entry["shape"])
        arrays[entry["name"]] = arr.astype(dt.newbyteorder("="))
    params = init_params(config, 0)
    try:
        params.load_state_dict({k[6:]: v for k, v in arrays.items() if k.startswith("param/")})
    except ValueError as e:
        raise CheckpointError(str(e)) from None
    opt = None
    if header["optimizer"] is not None:
        opt = AdaDeltaState(header["optimizer"]["rho"], header["optimizer"]["eps"])
        for k in params.tensors:
            opt.sq_grad[k] = arrays[f"sq_grad/{k}"]
            opt.sq_delta[k] = arrays[f"sq_delta/{k}"]
    vocabs = {k: (Vocabulary.from_list(v) if v is not None else None) for k, v in header["vocabs"].items()}
    return Checkpoint(
        params,
        vocabs,
        opt,
        header["rng_state"],
        header["epoch"],
        header["updates"],
        header["best_dev"],
        header["run_config"],
    )


def load(path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return from_bytes(path.read_bytes())
