"""Run configuration: one JSON document per experiment.

Unknown keys are rejected and every error names the offending field path.
Any scalar field can be overridden from the environment as
``SYNMT_<FIELD>`` (e.g. ``SYNMT_HIDDEN_DIM=64``); the value is parsed as
JSON first and falls back to a plain string.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

from .corpus import VARIANTS, Limits
from .evaluation import DEFAULT_BUCKETS, DEFAULT_CATEGORIES, DEFAULT_POS_GROUPS
from .model import ModelConfig
from .training import TrainConfig

ENV_PREFIX = "SYNMT_"


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class DataPaths:
    src: str | None = None
    tree: str | None = None
    tgt: str | None = None
    align: str | None = None


@dataclass
class RunConfig:
    # model (full-scale defaults)
    variant: str = "baseline"
    src_vocab_size: int = 16000
    tgt_vocab_size: int = 16000
    word_emb_dim: int = 620
    hidden_dim: int = 1000
    label_emb_dim: int = 100
    label_hidden_dim: int = 100
    attention_dim: int | None = None
    dropout: float = 0.5
    init_scale: float = 0.01
    seed: int = 1
    # data
    train: DataPaths = field(default_factory=DataPaths)
    dev: DataPaths = field(default_factory=DataPaths)
    test: DataPaths = field(default_factory=DataPaths)
    max_source_len: int = 50
    max_target_len: int = 50
    max_label_len: int = 100
    max_mixed_len: int = 150
    # training
    epochs: int = 10
    batch_size: int = 80
    clip_norm: float | None = 1.0
    rho: float = 0.95
    eps: float = 1e-6
    bucket_batches: int = 20
    # decoding and analysis
    beam: int = 10
    alignment_source: str = "output"
    bucket_edges: list[int] = field(default_factory=lambda: list(DEFAULT_BUCKETS))
    phrase_categories: list[str] = field(default_factory=lambda: [c for c in DEFAULT_CATEGORIES if c != "ALL"])
    pos_groups: dict[str, list[str]] = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_POS_GROUPS.items()})
    out: str = "run"

    def model_config(self, src_vocab: int, tgt_vocab: int, label_vocab: int) -> ModelConfig:
        return ModelConfig(
            variant=self.variant,
            src_vocab_size=src_vocab,
            tgt_vocab_size=tgt_vocab,
            label_vocab_size=label_vocab,
            word_emb_dim=self.word_emb_dim,
            hidden_dim=self.hidden_dim,
            label_emb_dim=self.label_emb_dim,
            label_hidden_dim=self.label_hidden_dim,
            attention_dim=self.attention_dim,
            dropout=self.dropout,
            init_scale=self.init_scale,
            seed=self.seed,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.epochs, self.batch_size, self.clip_norm, self.rho, self.eps, self.bucket_batches)

    def limits(self) -> Limits:
        return Limits(self.max_source_len, self.max_target_len, self.max_label_len, self.max_mixed_len)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


_POSITIVE = {
    "src_vocab_size", "tgt_vocab_size", "word_emb_dim", "hidden_dim", "label_emb_dim",
    "label_hidden_dim", "max_source_len", "max_target_len", "max_label_len", "max_mixed_len",
    "batch_size", "beam", "bucket_batches", "init_scale", "eps",
}


def _check_type(path: str, value: Any, kind: str) -> Any:
    ok = {
        "int": isinstance(value, int) and not isinstance(value, bool),
        "float": isinstance(value, (int, float)) and not isinstance(value, bool),
        "str": isinstance(value, str),
    }[kind]
    if not ok:
        raise ConfigError(path, f"expected {kind}, got {type(value).__name__} {value!r}")
    return float(value) if kind == "float" else value


def _scalar_kind(annotation: str) -> tuple[str, bool]:
    optional = "None" in annotation
    for kind in ("int", "float", "str"):
        if annotation.startswith(kind):
            return kind, optional
    raise AssertionError(annotation)


def _paths(path: str, value: Any) -> DataPaths:
    if not isinstance(value, Mapping):
        raise ConfigError(path, "expected an object")
    known = {f.name for f in fields(DataPaths)}
    for k, v in value.items():
        if k not in known:
            raise ConfigError(f"{path}.{k}", "unknown key")
        if v is not None and not isinstance(v, str):
            raise ConfigError(f"{path}.{k}", "expected a path string or null")
    return DataPaths(**value)


def from_dict(data: Mapping[str, Any]) -> RunConfig:
    if not isinstance(data, Mapping):
        raise ConfigError("$", "config must be a JSON object")
    known = {f.name: f for f in fields(RunConfig)}
    values: dict[str, Any] = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(key, "unknown key")
        annotation = str(known[key].type)
        if key in ("train", "dev", "test"):
            values[key] = _paths(key, value)
        elif key == "bucket_edges":
            if not isinstance(value, list):
                raise ConfigError(key, "expected a list of integers")
            values[key] = [_check_type(f"{key}[{i}]", v, "int") for i, v in enumerate(value)]
            if any(b <= a for a, b in zip(values[key], values[key][1:])):
                raise ConfigError(key, "edges must be strictly increasing")
        elif key == "phrase_categories":
            if not isinstance(value, list):
                raise ConfigError(key, "expected a list of strings")
            values[key] = [_check_type(f"{key}[{i}]", v, "str") for i, v in enumerate(value)]
        elif key == "pos_groups":
            if not isinstance(value, Mapping):
                raise ConfigError(key, "expected an object of tag lists")
            groups = {}
            for g, tags in value.items():
                if not isinstance(tags, list):
                    raise ConfigError(f"{key}.{g}", "expected a list of tags")
                groups[g] = [_check_type(f"{key}.{g}[{i}]", t, "str") for i, t in enumerate(tags)]
            values[key] = groups
        else:
            kind, optional = _scalar_kind(annotation)
            if value is None:
                if not optional:
                    raise ConfigError(key, "may not be null")
                values[key] = None
            else:
                values[key] = _check_type(key, value, kind)
    cfg = RunConfig(**values)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.variant not in VARIANTS:
        raise ConfigError("variant", f"must be one of {list(VARIANTS)}, got {cfg.variant!r}")
    for name in _POSITIVE:
        if getattr(cfg, name) <= 0:
            raise ConfigError(name, "must be positive")
    if cfg.attention_dim is not None and cfg.attention_dim <= 0:
        raise ConfigError("attention_dim", "must be positive or null")
    if not 0.0 <= cfg.dropout < 1.0:
        raise ConfigError("dropout", "must be in [0, 1)")
    if not 0.0 < cfg.rho < 1.0:
        raise ConfigError("rho", "must be in (0, 1)")
    if cfg.epochs < 0:
        raise ConfigError("epochs", "must be >= 0")
    if cfg.alignment_source not in ("output", "forced"):
        raise ConfigError("alignment_source", "must be 'output' or 'forced'")


def env_overrides(environ: Mapping[str, str] | None = None) -> dict[str, Any]:
    environ = os.environ if environ is None else environ
    known = {f.name for f in fields(RunConfig)}
    out = {}
    for key, raw in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        name = key[len(ENV_PREFIX) :].lower()
        if name not in known:
            raise ConfigError(key, "unknown override")
        try:
            out[name] = json.loads(raw)
        except json.JSONDecodeError:
            out[name] = raw
    return out


def load(path=None, overrides: Mapping[str, Any] | None = None, environ: Mapping[str, str] | None = None) -> RunConfig:
    """File values, then environment overrides, then explicit ``overrides``."""
    data: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError("--config", f"file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError("$", f"invalid JSON at line {e.lineno}: {e.msg}") from None
        if not isinstance(data, dict):
            raise ConfigError("$", "config must be a JSON object")
    data.update(env_overrides(environ))
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    cfg = from_dict(data)
    if path is not None:
        # data paths in a file are relative to that file
        for split in (cfg.train, cfg.dev, cfg.test):
            for f in fields(DataPaths):
                value = getattr(split, f.name)
                if value is not None and not Path(value).is_absolute():
                    setattr(split, f.name, str(path.parent / value))
    return cfg
