"""Planted-signal synthetic dataset generator.

Each sample plants one ground-truth moment: video rows inside the moment are
signal_strength * W @ q plus Gaussian noise (W a fixed seeded mixing matrix,
q the query's unit vector), rows outside are noise only. Saliency labels are
5 inside the moment and uniform 1..4 outside, replicated over three
annotators with small label noise. Everything is deterministic given the
seed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import (DatasetSample, MomentSpan, SaliencyAnnotation, clip_grid,
                   write_annotations)
from .errors import ValidationError
from .features import (DEFAULT_DT, DEFAULT_DV, FeaturePair, query_vector,
                       save_features, synthetic_text_features)

NUM_ANNOTATORS = 3
LABEL_NOISE_P = 0.05


@dataclass(frozen=True)
class SyntheticSpec:
    num_samples: int
    clips_per_video: int = 10
    dv: int = DEFAULT_DV
    dt: int = DEFAULT_DT
    moment_min_clips: int = 2
    moment_max_clips: int = 4
    signal_strength: float = 0.8
    noise_sigma: float = 0.3
    clip_len_s: float = 2.0

    def __post_init__(self):
        if self.num_samples < 1:
            raise ValidationError("num_samples must be >= 1", field="num_samples")
        if not 1 <= self.moment_min_clips <= self.moment_max_clips <= self.clips_per_video:
            raise ValidationError(
                "need 1 <= moment_min_clips <= moment_max_clips <= clips_per_video",
                field="moment_min_clips")
        if not 0.0 < self.signal_strength <= 1.0:
            raise ValidationError("signal_strength must be in (0, 1]",
                                  field="signal_strength")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be >= 0", field="noise_sigma")
        if self.dv <= 0 or self.dt <= 0:
            raise ValidationError("feature dims must be positive", field="dv/dt")
        if self.clip_len_s <= 0:
            raise ValidationError("clip_len_s must be positive", field="clip_len_s")


def mixing_matrix(spec: SyntheticSpec, seed: int) -> np.ndarray:
    """Fixed dv x dt matrix with orthonormal columns, seeded independently of
    the per-sample noise stream."""
    rng = np.random.default_rng(seed + 0x5EED)
    raw = rng.standard_normal((max(spec.dv, spec.dt), spec.dt))
    ortho, _ = np.linalg.qr(raw)
    return ortho[: spec.dv, : spec.dt].astype(np.float32)


def _noisy_label(label: int, rng: np.random.Generator) -> int:
    if rng.random() < LABEL_NOISE_P:
        label += int(rng.choice([-1, 1]))
    return int(min(5, max(1, label)))


def synthesize_dataset(
    spec: SyntheticSpec, seed: int, qid_offset: int = 0,
) -> tuple[list[DatasetSample], list[FeaturePair]]:
    """Generate num_samples (sample, feature) pairs, deterministic in seed."""
    rng = np.random.default_rng(seed)
    mixer = mixing_matrix(spec, seed)
    grid = clip_grid(spec.clips_per_video * spec.clip_len_s, spec.clip_len_s)
    samples: list[DatasetSample] = []
    features: list[FeaturePair] = []

    for i in range(spec.num_samples):
        qid = qid_offset + i
        query_text = f"synthetic query {qid:05d}"
        q = query_vector(query_text, spec.dt, seed)
        planted = spec.signal_strength * (mixer @ q)

        n_clips = spec.clips_per_video
        moment_len = int(rng.integers(spec.moment_min_clips,
                                      spec.moment_max_clips + 1))
        start_clip = int(rng.integers(0, n_clips - moment_len + 1))
        in_moment = np.zeros(n_clips, dtype=bool)
        in_moment[start_clip:start_clip + moment_len] = True

        video = (spec.noise_sigma
                 * rng.standard_normal((n_clips, spec.dv))).astype(np.float32)
        video[in_moment] += planted

        base_labels = np.where(in_moment, 5, rng.integers(1, 5, size=n_clips))
        scores = tuple(
            tuple(_noisy_label(int(base_labels[c]), rng)
                  for _ in range(NUM_ANNOTATORS))
            for c in range(n_clips)
        )

        sample = DatasetSample(
            query_id=qid,
            query_text=query_text,
            video_id=f"synth{qid:05d}",
            duration_s=grid.duration_s,
            gt_moments=(MomentSpan(start_clip * spec.clip_len_s,
                                   (start_clip + moment_len) * spec.clip_len_s),),
            saliency=SaliencyAnnotation(clip_ids=tuple(range(n_clips)),
                                        scores=scores),
        )
        sample.validate_kind("mr_hd")
        text = synthetic_text_features(query_text, spec.dt, seed)
        samples.append(sample)
        features.append(FeaturePair(video=video, text=text,
                                    clip_grid=grid).validate())

    return samples, features


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_synthetic_dataset(
    spec: SyntheticSpec, seed: int, out_dir, splits: dict[str, int] | None = None,
) -> dict:
    """Materialize annotation JSONL + .lhf feature files under out_dir.

    splits maps split name -> sample count; defaults to one 'train' split of
    spec.num_samples. Returns the written manifest (also saved as
    manifest.json with per-file sha256 hashes).
    """
    out_dir = Path(out_dir)
    if splits is None:
        splits = {"train": spec.num_samples}
    video_dir = out_dir / "features" / "video"
    text_dir = out_dir / "features" / "text"
    video_dir.mkdir(parents=True, exist_ok=True)
    text_dir.mkdir(parents=True, exist_ok=True)

    total = sum(splits.values())
    all_samples, all_features = synthesize_dataset(
        SyntheticSpec(**{**spec.__dict__, "num_samples": total}), seed)

    files: dict[str, str] = {}
    offset = 0
    split_files: dict[str, str] = {}
    for split_name, count in splits.items():
        chunk = all_samples[offset:offset + count]
        ann_path = out_dir / f"{split_name}.jsonl"
        write_annotations(chunk, ann_path)
        split_files[split_name] = ann_path.name
        for sample, pair in zip(chunk, all_features[offset:offset + count]):
            vpath = video_dir / f"{sample.video_id}.lhf"
            tpath = text_dir / f"{sample.query_id}.lhf"
            save_features(pair.video, vpath)
            save_features(pair.text, tpath)
            files[str(vpath.relative_to(out_dir))] = _sha256(vpath)
            files[str(tpath.relative_to(out_dir))] = _sha256(tpath)
        files[ann_path.name] = _sha256(ann_path)
        offset += count

    manifest = {
        "seed": seed,
        "spec": dict(spec.__dict__),
        "splits": split_files,
        "feature_dir": "features",
        "files": dict(sorted(files.items())),
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest
