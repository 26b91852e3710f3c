"""Versioned checkpoint files: magic "LHCKPT1", a JSON header describing the
model config, training state and tensor manifest, then raw little-endian
tensor payloads. Writing is deterministic: identical state produces identical
bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .errors import CheckpointError
from .model import ModelConfig, MomentHighlightModel

CKPT_MAGIC = b"LHCKPT1\n"
FORMAT_VERSION = 1

_DTYPES = {"f4": "<f4", "f8": "<f8", "u1": "|u1", "i8": "<i8"}


def _dtype_code(arr: np.ndarray) -> str:
    for code, np_dtype in _DTYPES.items():
        if arr.dtype == np.dtype(np_dtype):
            return code
    raise CheckpointError(f"unsupported tensor dtype {arr.dtype}")


@dataclass
class Checkpoint:
    model_config: ModelConfig
    dv: int
    dt: int
    epoch: int
    seed: int
    config_hash: Optional[str]
    model_hash: Optional[str]
    tensors: dict[str, np.ndarray]
    extra: dict = field(default_factory=dict)
    numpy_rng_state: Optional[dict] = None

    def model_tensors(self) -> dict[str, np.ndarray]:
        return {k[len("model."):]: v for k, v in self.tensors.items()
                if k.startswith("model.")}

    def build_model(self) -> MomentHighlightModel:
        model = MomentHighlightModel(self.model_config, self.dv, self.dt)
        state = {k: torch.from_numpy(v.copy())
                 for k, v in self.model_tensors().items()}
        model.load_state_dict(state)
        return model


def save_checkpoint(path, *, model_config: ModelConfig, dv: int, dt: int,
                    epoch: int, seed: int, tensors: dict[str, np.ndarray],
                    config_hash: Optional[str] = None,
                    model_hash: Optional[str] = None,
                    extra: Optional[dict] = None,
                    numpy_rng_state: Optional[dict] = None) -> Path:
    path = Path(path)
    manifest = []
    offset = 0
    ordered = sorted(tensors.items())
    buffers = []
    for name, arr in ordered:
        arr = np.ascontiguousarray(arr)
        code = _dtype_code(arr)
        arr = arr.astype(_DTYPES[code], copy=False)
        raw = arr.tobytes(order="C")
        manifest.append({"name": name, "dtype": code,
                         "shape": list(arr.shape), "offset": offset,
                         "nbytes": len(raw)})
        buffers.append(raw)
        offset += len(raw)

    header = {
        "format_version": FORMAT_VERSION,
        "model_config": model_config.to_dict(),
        "dims": {"dv": dv, "dt": dt},
        "epoch": epoch,
        "seed": seed,
        "config_hash": config_hash,
        "model_hash": model_hash,
        "extra": extra or {},
        "numpy_rng_state": numpy_rng_state,
        "tensors": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        for raw in buffers:
            f.write(raw)
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.read(len(CKPT_MAGIC))
        if magic != CKPT_MAGIC:
            raise CheckpointError(
                f"{path}: bad checkpoint magic {magic!r}, expected {CKPT_MAGIC!r}")
        (header_len,) = struct.unpack("<Q", f.read(8))
        try:
            header = json.loads(f.read(header_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: unreadable header ({exc})")
        payload = f.read()

    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported format version {header.get('format_version')}")
    tensors = {}
    for entry in header["tensors"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(payload):
            raise CheckpointError(f"{path}: truncated tensor payload")
        raw = payload[start:start + nbytes]
        arr = np.frombuffer(raw, dtype=_DTYPES[entry["dtype"]])
        tensors[entry["name"]] = arr.reshape(entry["shape"]).copy()

    return Checkpoint(
        model_config=ModelConfig.from_dict(header["model_config"]),
        dv=header["dims"]["dv"],
        dt=header["dims"]["dt"],
        epoch=header["epoch"],
        seed=header["seed"],
        config_hash=header.get("config_hash"),
        model_hash=header.get("model_hash"),
        tensors=tensors,
        extra=header.get("extra", {}),
        numpy_rng_state=header.get("numpy_rng_state"),
    )


def model_state_tensors(model: torch.nn.Module) -> dict[str, np.ndarray]:
    return {f"model.{k}": v.detach().cpu().numpy()
            for k, v in model.state_dict().items()}


def optimizer_state_tensors(optimizer: torch.optim.Optimizer,
                            model: torch.nn.Module) -> dict[str, np.ndarray]:
    """AdamW state keyed by parameter name for stable serialization."""
    name_of = {id(p): n for n, p in model.named_parameters()}
    out: dict[str, np.ndarray] = {}
    for group_idx, group in enumerate(optimizer.param_groups):
        for p in group["params"]:
            state = optimizer.state.get(p)
            if not state:
                continue
            pname = name_of[id(p)]
            out[f"optim.{pname}.step"] = np.asarray(
                [float(state["step"])], dtype="<f8")
            out[f"optim.{pname}.exp_avg"] = state["exp_avg"].detach().numpy()
            out[f"optim.{pname}.exp_avg_sq"] = state["exp_avg_sq"].detach().numpy()
    return out


def restore_optimizer_state(optimizer: torch.optim.Optimizer,
                            model: torch.nn.Module,
                            tensors: dict[str, np.ndarray]) -> None:
    for name, param in model.named_parameters():
        key = f"optim.{name}.step"
        if key not in tensors:
            continue
        optimizer.state[param] = {
            "step": torch.tensor(float(tensors[key][0])),
            "exp_avg": torch.from_numpy(tensors[f"optim.{name}.exp_avg"].copy()),
            "exp_avg_sq": torch.from_numpy(
                tensors[f"optim.{name}.exp_avg_sq"].copy()),
        }
