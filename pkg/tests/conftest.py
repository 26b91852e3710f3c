import sys
from pathlib import Path

import pytest
import torch
import yaml

sys.path.insert(0, str(Path(__file__).parent))

from momentkit.synthetic import SyntheticSpec, write_synthetic_dataset
from momentkit.train_config import load_config

torch.set_num_threads(1)

TINY_SPEC = dict(num_samples=8, clips_per_video=10, dv=24, dt=24,
                 moment_min_clips=2, moment_max_clips=4,
                 signal_strength=0.9, noise_sigma=0.2, clip_len_s=2.0)

TINY_MODEL = dict(hidden_dim=32, num_slots=5, enc_layers=1, dec_layers=1,
                  heads=4, dropout=0.1)


def make_dataset(root: Path, spec_kwargs=None, seed=7, splits=None) -> Path:
    """Materialize a small synthetic dataset under root/data."""
    spec = SyntheticSpec(**(spec_kwargs or TINY_SPEC))
    out = root / "data"
    write_synthetic_dataset(spec, seed, out, splits)
    return out


def make_config(root: Path, data_dir: Path, *, model=None, optim=None,
                run=None, features=None, splits=("train", "val"),
                name="config.yaml") -> Path:
    """Write a training YAML pointing at a generated dataset."""
    spec_dims = dict(dv=TINY_SPEC["dv"], dt=TINY_SPEC["dt"])
    cfg = {
        "data": {
            "kind": "mr_hd",
            "train_annotations": str(data_dir / f"{splits[0]}.jsonl"),
            "val_annotations": (str(data_dir / f"{splits[1]}.jsonl")
                                if len(splits) > 1 else None),
            "feature_dir": str(data_dir / "features"),
            "clip_len_s": 2.0,
        },
        "features": {"name": "synthetic", **spec_dims, "seed": 7,
                     **(features or {})},
        "model": {**TINY_MODEL, **(model or {})},
        "optim": {"lr": 0.0005, "epochs": 3, "batch_size": 8,
                  **(optim or {})},
        "run": {"seed": 11, "results_dir": str(root / "runs"),
                **(run or {})},
    }
    path = root / name
    with open(path, "w") as f:
        yaml.safe_dump(cfg, f)
    return path


@pytest.fixture
def tiny_dataset(tmp_path):
    return make_dataset(tmp_path, splits={"train": 6, "val": 2})


@pytest.fixture
def tiny_config(tmp_path, tiny_dataset):
    return load_config(make_config(tmp_path, tiny_dataset))
