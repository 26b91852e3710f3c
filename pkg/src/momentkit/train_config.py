"""YAML experiment configuration: strict validation (unknown keys rejected),
default filling, and a stable hash of the effective config so runs can be
reproduced and checkpoints matched to the settings that produced them.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional

import yaml

from .data import DATASET_KINDS
from .errors import ConfigError
from .features import FeatureExtractorSpec
from .metrics import DEFAULT_AVG_MAP_GRID, MetricConfig
from .model import ModelConfig

RESULTS_DIR_ENV = "LIGHTHOUSE_RESULTS_DIR"

_REQUIRED = object()


def _as_int(v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise TypeError("expected an integer")
    return v


def _as_float(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TypeError("expected a number")
    return float(v)


def _as_str(v):
    if not isinstance(v, str):
        raise TypeError("expected a string")
    return v


def _as_bool(v):
    if not isinstance(v, bool):
        raise TypeError("expected a boolean")
    return v


def _as_float_list(v):
    if not isinstance(v, list) or not v:
        raise TypeError("expected a non-empty list of numbers")
    return [_as_float(x) for x in v]


def _optional(conv):
    def inner(v):
        return None if v is None else conv(v)
    return inner


_SCHEMA: dict[str, dict[str, tuple[Callable, Any]]] = {
    "data": {
        "kind": (_as_str, _REQUIRED),
        "train_annotations": (_as_str, _REQUIRED),
        "val_annotations": (_optional(_as_str), None),
        "feature_dir": (_as_str, _REQUIRED),
        "clip_len_s": (_as_float, 2.0),
    },
    "features": {
        "name": (_as_str, "synthetic"),
        "dv": (_as_int, 128),
        "dt": (_as_int, 128),
        "seed": (_as_int, 0),
    },
    "model": {
        "hidden_dim": (_as_int, 256),
        "num_slots": (_as_int, 10),
        "enc_layers": (_as_int, 2),
        "dec_layers": (_as_int, 2),
        "heads": (_as_int, 8),
        "dropout": (_as_float, 0.1),
        "w_l1": (_as_float, 10.0),
        "w_giou": (_as_float, 1.0),
        "w_cls": (_as_float, 4.0),
        "w_sal": (_as_float, 1.0),
        "sal_margin": (_as_float, 0.2),
        "neg_pair": (_as_bool, False),
        "dummy_tokens": (_as_int, 0),
        "content_slots": (_as_bool, False),
        "use_position_encoding": (_as_bool, True),
    },
    "optim": {
        "lr": (_as_float, 1e-4),
        "weight_decay": (_as_float, 1e-4),
        "epochs": (_as_int, 100),
        "batch_size": (_as_int, 32),
        "grad_clip": (_as_float, 0.1),
        "lr_drop_epoch": (_optional(_as_int), None),
    },
    "eval": {
        "r1_thresholds": (_as_float_list, [0.5, 0.7]),
        "map_thresholds": (_as_float_list, [0.5, 0.75]),
        "avg_map_grid": (_as_float_list, list(DEFAULT_AVG_MAP_GRID)),
        "hd_positive_level": (_as_int, 5),
        "hd_positive_mode": (_as_str, "level"),
        "nms_threshold": (_as_float, 0.7),
        "top_k": (_as_int, 10),
    },
    "run": {
        "seed": (_as_int, 42),
        "results_dir": (_as_str, _REQUIRED),
        "checkpoint_every": (_as_int, 50),
        "eval_every": (_as_int, 25),
    },
}


def _validate_section(name: str, raw: dict,
                      schema: dict[str, tuple[Callable, Any]]) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(f"section '{name}' must be a mapping")
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown key '{unknown[0]}' in section '{name}'")
    out = {}
    for key, (convert, default) in schema.items():
        if key in raw:
            try:
                out[key] = convert(raw[key])
            except TypeError as exc:
                raise ConfigError(f"{name}.{key}: {exc}")
        elif default is _REQUIRED:
            raise ConfigError(f"missing required key '{key}' in section '{name}'")
        else:
            out[key] = default
    return out


@dataclass(frozen=True)
class DataConfig:
    kind: str
    train_annotations: Path
    val_annotations: Optional[Path]
    feature_dir: Path
    clip_len_s: float


@dataclass(frozen=True)
class OptimConfig:
    lr: float
    weight_decay: float
    epochs: int
    batch_size: int
    grad_clip: float
    lr_drop_epoch: int


@dataclass(frozen=True)
class EvalConfig:
    metrics: MetricConfig
    nms_threshold: float
    top_k: int


@dataclass(frozen=True)
class RunConfig:
    seed: int
    results_dir: Path
    checkpoint_every: int
    eval_every: int


@dataclass(frozen=True)
class TrainConfig:
    data: DataConfig
    features: FeatureExtractorSpec
    model: ModelConfig
    optim: OptimConfig
    eval: EvalConfig
    run: RunConfig

    def effective_dict(self) -> dict:
        ev = self.eval
        return {
            "data": {
                "kind": self.data.kind,
                "train_annotations": str(self.data.train_annotations),
                "val_annotations": (None if self.data.val_annotations is None
                                    else str(self.data.val_annotations)),
                "feature_dir": str(self.data.feature_dir),
                "clip_len_s": self.data.clip_len_s,
            },
            "features": {"name": self.features.name, "dv": self.features.dv,
                         "dt": self.features.dt, "seed": self.features.seed},
            "model": self.model.to_dict(),
            "optim": dict(self.optim.__dict__),
            "eval": {
                "r1_thresholds": list(ev.metrics.r1_thresholds),
                "map_thresholds": list(ev.metrics.map_thresholds),
                "avg_map_grid": list(ev.metrics.avg_map_grid),
                "hd_positive_level": ev.metrics.hd_positive_level,
                "hd_positive_mode": ev.metrics.hd_positive_mode,
                "nms_threshold": ev.nms_threshold,
                "top_k": ev.top_k,
            },
            "run": {
                "seed": self.run.seed,
                "results_dir": str(self.run.results_dir),
                "checkpoint_every": self.run.checkpoint_every,
                "eval_every": self.run.eval_every,
            },
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.effective_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def model_section_hash(self) -> str:
        """Hash of everything that must agree between a checkpoint and an
        evaluation config: the model section and the feature dims."""
        blob = json.dumps({"model": self.model.to_dict(),
                           "dv": self.features.dv, "dt": self.features.dt},
                          sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def save_effective(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            yaml.safe_dump(self.effective_dict(), f, sort_keys=True)


def load_config(path) -> TrainConfig:
    """Load and fully validate a training/eval YAML config.

    Unknown keys are rejected by name, defaults are filled, relative paths are
    resolved against the config file's directory, and LIGHTHOUSE_RESULTS_DIR
    (when set) overrides run.results_dir.
    """
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        raw = yaml.safe_load(f)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config root must be a mapping")
    unknown = sorted(set(raw) - set(_SCHEMA))
    if unknown:
        raise ConfigError(f"unknown section '{unknown[0]}'")

    sections = {name: _validate_section(name, raw.get(name, {}), schema)
                for name, schema in _SCHEMA.items()}

    d = sections["data"]
    if d["kind"] not in DATASET_KINDS:
        raise ConfigError(
            f"data.kind must be one of {list(DATASET_KINDS)}, got '{d['kind']}'")
    base = path.parent

    def resolve(p: Optional[str], must_exist: bool) -> Optional[Path]:
        if p is None:
            return None
        resolved = (base / p).resolve() if not Path(p).is_absolute() else Path(p)
        if must_exist and not resolved.exists():
            raise ConfigError(f"referenced path does not exist: {resolved}")
        return resolved

    data = DataConfig(
        kind=d["kind"],
        train_annotations=resolve(d["train_annotations"], must_exist=True),
        val_annotations=resolve(d["val_annotations"], must_exist=True),
        feature_dir=resolve(d["feature_dir"], must_exist=True),
        clip_len_s=d["clip_len_s"],
    )
    if data.clip_len_s <= 0:
        raise ConfigError("data.clip_len_s must be positive")

    o = sections["optim"]
    if o["lr"] <= 0:
        raise ConfigError("optim.lr must be positive")
    if o["epochs"] < 1:
        raise ConfigError("optim.epochs must be >= 1")
    if o["batch_size"] < 1:
        raise ConfigError("optim.batch_size must be >= 1")
    lr_drop = o["lr_drop_epoch"]
    if lr_drop is None:
        lr_drop = max(1, round(0.75 * o["epochs"]))
    optim = OptimConfig(lr=o["lr"], weight_decay=o["weight_decay"],
                        epochs=o["epochs"], batch_size=o["batch_size"],
                        grad_clip=o["grad_clip"], lr_drop_epoch=lr_drop)

    ev = sections["eval"]
    eval_cfg = EvalConfig(
        metrics=MetricConfig(
            r1_thresholds=tuple(ev["r1_thresholds"]),
            map_thresholds=tuple(ev["map_thresholds"]),
            avg_map_grid=tuple(ev["avg_map_grid"]),
            hd_positive_level=ev["hd_positive_level"],
            hd_positive_mode=ev["hd_positive_mode"],
        ),
        nms_threshold=ev["nms_threshold"],
        top_k=ev["top_k"],
    )

    r = sections["run"]
    results_dir = os.environ.get(RESULTS_DIR_ENV) or r["results_dir"]
    run = RunConfig(
        seed=r["seed"],
        results_dir=(base / results_dir).resolve()
        if not Path(results_dir).is_absolute() else Path(results_dir),
        checkpoint_every=r["checkpoint_every"],
        eval_every=r["eval_every"],
    )

    return TrainConfig(
        data=data,
        features=FeatureExtractorSpec(**sections["features"]),
        model=ModelConfig(**sections["model"]),
        optim=optim,
        eval=eval_cfg,
        run=run,
    )


_SYNTH_SCHEMA: dict[str, tuple[Callable, Any]] = {
    "num_samples": (_as_int, 32),
    "clips_per_video": (_as_int, 10),
    "dv": (_as_int, 128),
    "dt": (_as_int, 128),
    "moment_min_clips": (_as_int, 2),
    "moment_max_clips": (_as_int, 4),
    "signal_strength": (_as_float, 0.8),
    "noise_sigma": (_as_float, 0.3),
    "clip_len_s": (_as_float, 2.0),
}


def load_synth_config(path):
    """Load a synthetic-dataset spec YAML: {seed, spec: {...}, splits: {...}}."""
    from .synthetic import SyntheticSpec

    path = Path(path)
    with open(path, encoding="utf-8") as f:
        raw = yaml.safe_load(f)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config root must be a mapping")
    unknown = sorted(set(raw) - {"seed", "spec", "splits"})
    if unknown:
        raise ConfigError(f"unknown key '{unknown[0]}'")
    seed = _as_int(raw.get("seed", 0))
    spec_fields = _validate_section("spec", raw.get("spec", {}), _SYNTH_SCHEMA)
    splits = raw.get("splits")
    if splits is not None:
        if not isinstance(splits, dict) or not splits:
            raise ConfigError("splits must be a non-empty mapping of name -> count")
        splits = {str(k): _as_int(v) for k, v in splits.items()}
    return SyntheticSpec(**spec_fields), seed, splits
