"""Video/text feature matrices, the .lhf binary format, and feature extractors.

A model consumes one FeaturePair per sample: video rows (one per clip, L x Dv)
and text rows (T_w x Dt), both float32. Extraction is a preprocessing step;
training reads only .lhf files from disk.

.lhf layout: bytes 0-3 magic "LHF1", bytes 4-7 row count (u32 LE), bytes 8-11
column count (u32 LE), bytes 12-15 reserved zero, then rows*cols float32 LE
row-major.
"""

from __future__ import annotations

import hashlib
import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .data import ClipGrid, clip_grid
from .errors import (FeatureFormatError, FeatureLengthError, MomentKitError,
                     ValidationError)

LHF_MAGIC = b"LHF1"
_HEADER = struct.Struct("<4sIII")

DEFAULT_DV = 128
DEFAULT_DT = 128
TEXT_HASH_BUCKETS = 1024
VIDEO_HIST_BINS = 32


@dataclass(frozen=True)
class FeaturePair:
    """Video features (L x Dv) and text features (T_w x Dt) for one sample."""

    video: np.ndarray
    text: np.ndarray
    clip_grid: ClipGrid

    def validate(self) -> "FeaturePair":
        if self.video.ndim != 2 or self.text.ndim != 2:
            raise ValidationError("feature matrices must be 2-D", field="features")
        if self.video.shape[0] != self.clip_grid.num_clips:
            raise ValidationError(
                f"video has {self.video.shape[0]} rows but grid has "
                f"{self.clip_grid.num_clips} clips", field="video")
        if self.text.shape[0] < 1:
            raise ValidationError("text features need >= 1 row", field="text")
        for name, mat in (("video", self.video), ("text", self.text)):
            if not np.isfinite(mat).all():
                raise ValidationError(f"{name} features contain NaN/Inf", field=name)
        return self


def save_features(matrix: np.ndarray, path) -> None:
    """Write a 2-D float32 matrix to an .lhf file."""
    mat = np.ascontiguousarray(matrix, dtype="<f4")
    if mat.ndim != 2:
        raise ValidationError("feature matrix must be 2-D", field="features")
    rows, cols = mat.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(LHF_MAGIC, rows, cols, 0))
        f.write(mat.tobytes(order="C"))


def load_features(path) -> np.ndarray:
    """Read an .lhf file back into a float32 matrix."""
    path = Path(path)
    with open(path, "rb") as f:
        header = f.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise FeatureFormatError(f"{path}: truncated header")
        magic, rows, cols, _reserved = _HEADER.unpack(header)
        if magic != LHF_MAGIC:
            raise FeatureFormatError(
                f"{path}: bad magic {magic!r}, expected {LHF_MAGIC!r}")
        payload = f.read()
    expected = rows * cols * 4
    if len(payload) != expected:
        raise FeatureLengthError(path, expected, len(payload))
    return np.frombuffer(payload, dtype="<f4").reshape(rows, cols).copy()


def l2_normalize(matrix: np.ndarray) -> np.ndarray:
    """Row-wise L2 normalization; rejects zero rows."""
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if not np.all(norms > 0):
        raise ValidationError("cannot L2-normalize a zero feature row",
                              field="features")
    return (matrix / norms).astype(np.float32)


def stable_hash(text: str) -> int:
    """Process-independent 64-bit hash of a string."""
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def tokenize(query: str) -> list[str]:
    return re.findall(r"[a-z0-9]+", query.lower())


# ---------------------------------------------------------------------------
# Extractors


@dataclass(frozen=True)
class FeatureExtractorSpec:
    """Names an extractor and fixes its output dims and seed."""

    name: str
    dv: int = DEFAULT_DV
    dt: int = DEFAULT_DT
    seed: int = 0

    def __post_init__(self):
        if self.dv <= 0 or self.dt <= 0:
            raise ValidationError("feature dims must be positive", field="dv/dt")


class FeatureExtractor:
    """Stateless extractor mapping raw inputs to FeaturePair halves."""

    name = "base"

    def __init__(self, spec: FeatureExtractorSpec):
        self.spec = spec

    def extract_video(self, source, clip_len_s: float) -> tuple[np.ndarray, ClipGrid]:
        raise NotImplementedError

    def extract_text(self, query: str) -> np.ndarray:
        raise NotImplementedError


def _projection(rng_seed: int, rows: int, cols: int) -> np.ndarray:
    rng = np.random.default_rng(rng_seed)
    return (rng.standard_normal((rows, cols)) / np.sqrt(rows)).astype(np.float32)


def _hashed_bow_row(query: str, dt: int, seed: int) -> np.ndarray:
    tokens = tokenize(query)
    if not tokens:
        raise ValidationError("query must contain at least one token", field="query")
    counts = np.zeros(TEXT_HASH_BUCKETS, dtype=np.float32)
    for tok in tokens:
        counts[stable_hash(tok) % TEXT_HASH_BUCKETS] += 1.0
    proj = _projection(seed + 1, TEXT_HASH_BUCKETS, dt)
    return l2_normalize((counts @ proj).reshape(1, dt))


def _clip_frame_files(clip_dir: Path) -> list[Path]:
    exts = {".png", ".jpg", ".jpeg", ".bmp"}
    return sorted(p for p in clip_dir.iterdir() if p.suffix.lower() in exts)


def video_row_from_frames(frames: list[np.ndarray], dv: int, seed: int) -> np.ndarray:
    """One clip row: 32-bin grayscale histogram mass plus per-channel mean/std,
    pushed through a fixed seeded random projection to dv dims."""
    if not frames:
        raise ValidationError("clip has zero frames", field="frames")
    stacked = np.concatenate([f.reshape(-1, 3).astype(np.float32) for f in frames])
    gray = stacked.mean(axis=1)
    hist, _ = np.histogram(gray, bins=VIDEO_HIST_BINS, range=(0.0, 256.0))
    mass = hist.astype(np.float32) / float(gray.size)
    means = stacked.mean(axis=0) / 255.0
    stds = stacked.std(axis=0) / 255.0
    raw = np.concatenate([mass, means, stds]).astype(np.float32)
    proj = _projection(seed, raw.size, dv)
    return l2_normalize((raw @ proj).reshape(1, dv))[0]


class TrivialExtractor(FeatureExtractor):
    """Deterministic pixel-statistics extractor; stands in for real backbones.

    Video input is a frame directory: one subdirectory per clip, each holding
    sequentially numbered RGB images.
    """

    name = "trivial"

    def extract_video(self, source, clip_len_s: float) -> tuple[np.ndarray, ClipGrid]:
        from PIL import Image

        root = Path(source)
        if not root.is_dir():
            raise MomentKitError(f"frame directory not found: {root}")
        clip_dirs = sorted(p for p in root.iterdir() if p.is_dir())
        if not clip_dirs:
            raise MomentKitError(f"no clip subdirectories under {root}")
        rows = []
        for clip_dir in clip_dirs:
            files = _clip_frame_files(clip_dir)
            if not files:
                raise ValidationError(f"clip '{clip_dir.name}' has zero frames",
                                      field="frames")
            frames = [np.asarray(Image.open(p).convert("RGB")) for p in files]
            rows.append(video_row_from_frames(frames, self.spec.dv, self.spec.seed))
        video = np.stack(rows).astype(np.float32)
        grid = clip_grid(len(clip_dirs) * clip_len_s, clip_len_s)
        return video, grid

    def extract_text(self, query: str) -> np.ndarray:
        return _hashed_bow_row(query, self.spec.dt, self.spec.seed)


def query_vector(query: str, dt: int, seed: int) -> np.ndarray:
    """Unit vector derived deterministically from (query text, seed).

    The synthetic generator plants this vector into in-moment video rows, so
    re-deriving it from the query string at inference time recovers the
    planted signal.
    """
    rng = np.random.default_rng((stable_hash(query) + seed) % (2 ** 63))
    q = rng.standard_normal(dt)
    return (q / np.linalg.norm(q)).astype(np.float32)


def synthetic_text_features(query: str, dt: int, seed: int) -> np.ndarray:
    """Token-level features for a synthetic query: the query vector replicated
    over a hash-determined row count with small deterministic jitter."""
    if not query:
        raise ValidationError("query must be non-empty", field="query")
    q = query_vector(query, dt, seed)
    h = stable_hash(query + "/rows")
    n_rows = 3 + h % 3
    rng = np.random.default_rng((h + seed) % (2 ** 63))
    jitter = 0.05 * rng.standard_normal((n_rows, dt)).astype(np.float32)
    return (np.tile(q, (n_rows, 1)) + jitter).astype(np.float32)


class SyntheticExtractor(FeatureExtractor):
    """Serving-side twin of the synthetic generator: video features come from
    .lhf files, text features are re-derived from the query string."""

    name = "synthetic"

    def extract_video(self, source, clip_len_s: float) -> tuple[np.ndarray, ClipGrid]:
        video = load_features(source)
        grid = clip_grid(video.shape[0] * clip_len_s, clip_len_s)
        return video, grid

    def extract_text(self, query: str) -> np.ndarray:
        return synthetic_text_features(query, self.spec.dt, self.spec.seed)


class PrecomputedExtractor(FeatureExtractor):
    """Loads offline-extracted video features (.lhf); text falls back to the
    hashed bag-of-words path since queries only arrive at predict time."""

    name = "precomputed"

    def extract_video(self, source, clip_len_s: float) -> tuple[np.ndarray, ClipGrid]:
        video = load_features(source)
        grid = clip_grid(video.shape[0] * clip_len_s, clip_len_s)
        return video, grid

    def extract_text(self, query: str) -> np.ndarray:
        return _hashed_bow_row(query, self.spec.dt, self.spec.seed)


EXTRACTORS: dict[str, type[FeatureExtractor]] = {
    TrivialExtractor.name: TrivialExtractor,
    SyntheticExtractor.name: SyntheticExtractor,
    PrecomputedExtractor.name: PrecomputedExtractor,
}


def registered_extractor_names() -> list[str]:
    return sorted(EXTRACTORS)


def build_extractor(spec: FeatureExtractorSpec) -> FeatureExtractor:
    if spec.name not in EXTRACTORS:
        raise MomentKitError(
            f"unknown feature extractor '{spec.name}'; registered: "
            f"{registered_extractor_names()}")
    return EXTRACTORS[spec.name](spec)
