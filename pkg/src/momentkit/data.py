"""Annotation/prediction data model and the JSONL formats it lives in.

Annotation files are UTF-8 JSONL, one sample per line, using the de facto
field names of public MR-HD releases: qid, query, vid, duration,
relevant_windows, relevant_clip_ids, saliency_scores, domain. Prediction
files are JSONL with qid, pred_relevant_windows ([start, end, score]) and
pred_saliency_scores. Floats are rounded to 4 decimals on write.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .errors import AnnotationParseError, ValidationError

DATASET_KINDS = ("mr_hd", "mr", "hd")
DEFAULT_CLIP_LEN_S = 2.0
MRHD_ANNOTATOR_COUNT = 3
FLOAT_DECIMALS = 4


def _round(x: float) -> float:
    return round(float(x), FLOAT_DECIMALS)


@dataclass(frozen=True)
class MomentSpan:
    """A (start, end) interval in seconds within a video."""

    start_s: float
    end_s: float

    def __post_init__(self):
        if not (math.isfinite(self.start_s) and math.isfinite(self.end_s)):
            raise ValidationError("span endpoints must be finite", field="span")
        if self.start_s < 0:
            raise ValidationError("start_s must be >= 0", field="span")
        if not self.start_s < self.end_s:
            raise ValidationError("start_s < end_s required", field="span")

    @property
    def length_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class SaliencyAnnotation:
    """Per-clip integer saliency labels from one or more annotators.

    clip_ids are the annotated clip indices (strictly increasing); scores[i]
    holds the per-annotator labels of clip_ids[i], each in 1..5.
    """

    clip_ids: tuple[int, ...]
    scores: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if len(self.clip_ids) != len(self.scores):
            raise ValidationError(
                "clip_ids and scores must have equal length", field="saliency_scores"
            )
        if len(self.clip_ids) == 0:
            raise ValidationError("saliency annotation must cover >= 1 clip",
                                  field="relevant_clip_ids")
        prev = -1
        for cid in self.clip_ids:
            if not isinstance(cid, int) or cid < 0:
                raise ValidationError("clip ids must be ints >= 0",
                                      field="relevant_clip_ids")
            if cid <= prev:
                raise ValidationError("clip ids must be strictly increasing",
                                      field="relevant_clip_ids")
            prev = cid
        n_annot = len(self.scores[0])
        for row in self.scores:
            if len(row) != n_annot:
                raise ValidationError("all clips need the same annotator count",
                                      field="saliency_scores")
            for s in row:
                if not isinstance(s, int) or not 1 <= s <= 5:
                    raise ValidationError("scores must be integers in 1..5",
                                          field="saliency_scores")

    @property
    def num_annotators(self) -> int:
        return len(self.scores[0])

    def labels_for(self, annotator: int) -> dict[int, int]:
        """clip_id -> label map for one annotator."""
        return {cid: row[annotator] for cid, row in zip(self.clip_ids, self.scores)}


@dataclass(frozen=True)
class DatasetSample:
    """One (video, query) pair with its ground truth."""

    query_id: int
    query_text: str
    video_id: str
    duration_s: float
    gt_moments: tuple[MomentSpan, ...] = ()
    saliency: Optional[SaliencyAnnotation] = None
    domain_tag: Optional[str] = None

    def __post_init__(self):
        if not self.query_text:
            raise ValidationError("query text must be non-empty",
                                  query_id=self.query_id, field="query")
        if not self.video_id:
            raise ValidationError("video id must be non-empty",
                                  query_id=self.query_id, field="vid")
        if not (math.isfinite(self.duration_s) and self.duration_s > 0):
            raise ValidationError("duration must be positive",
                                  query_id=self.query_id, field="duration")
        for m in self.gt_moments:
            if m.end_s > self.duration_s + 1e-6:
                raise ValidationError(
                    f"moment [{m.start_s}, {m.end_s}] exceeds duration {self.duration_s}",
                    query_id=self.query_id, field="relevant_windows")

    def validate_kind(self, kind: str) -> None:
        """Check the optional-field pattern required by a dataset kind."""
        if kind not in DATASET_KINDS:
            raise ValidationError(f"unknown dataset kind '{kind}'", field="kind")
        if kind in ("mr_hd", "mr") and not self.gt_moments:
            raise ValidationError("at least one relevant window required",
                                  query_id=self.query_id, field="relevant_windows")
        if kind in ("mr_hd", "hd") and self.saliency is None:
            raise ValidationError("saliency annotation required",
                                  query_id=self.query_id, field="saliency_scores")
        if kind == "mr" and self.saliency is not None:
            raise ValidationError("saliency annotation not allowed for kind 'mr'",
                                  query_id=self.query_id, field="saliency_scores")
        if kind == "hd" and self.gt_moments:
            raise ValidationError("relevant windows not allowed for kind 'hd'",
                                  query_id=self.query_id, field="relevant_windows")
        if kind == "mr_hd" and self.saliency.num_annotators != MRHD_ANNOTATOR_COUNT:
            raise ValidationError(
                f"mr_hd saliency needs {MRHD_ANNOTATOR_COUNT} annotators, "
                f"got {self.saliency.num_annotators}",
                query_id=self.query_id, field="saliency_scores")


@dataclass(frozen=True)
class PredictionRecord:
    """Ranked scored moments plus per-clip saliency scores for one query."""

    query_id: int
    moments: tuple[tuple[MomentSpan, float], ...]
    saliency_scores: tuple[float, ...]

    def __post_init__(self):
        confs = [c for _, c in self.moments]
        if any(b > a for a, b in zip(confs, confs[1:])):
            raise ValidationError("moments must be sorted by confidence descending",
                                  query_id=self.query_id, field="pred_relevant_windows")
        for s in self.saliency_scores:
            if not math.isfinite(s):
                raise ValidationError("saliency scores must be finite",
                                      query_id=self.query_id,
                                      field="pred_saliency_scores")


@dataclass(frozen=True)
class ClipGrid:
    """Uniform tiling of [0, duration] into clips of clip_len_s seconds.

    The final clip may be truncated; boundaries are gapless and disjoint.
    """

    clip_len_s: float
    boundaries: tuple[tuple[float, float], ...]

    @property
    def num_clips(self) -> int:
        return len(self.boundaries)

    @property
    def duration_s(self) -> float:
        return self.boundaries[-1][1]

    def starts(self) -> list[float]:
        return [b[0] for b in self.boundaries]

    def midpoints(self) -> list[float]:
        return [(b[0] + b[1]) / 2.0 for b in self.boundaries]


def clip_grid(duration_s: float, clip_len_s: float = DEFAULT_CLIP_LEN_S) -> ClipGrid:
    """Tile [0, duration_s] into ceil(duration/clip_len) clips."""
    if not (math.isfinite(duration_s) and duration_s > 0):
        raise ValidationError("duration_s must be positive", field="duration")
    if not (math.isfinite(clip_len_s) and clip_len_s > 0):
        raise ValidationError("clip_len_s must be positive", field="clip_len_s")
    n = math.ceil(duration_s / clip_len_s - 1e-9)
    bounds = []
    for i in range(n):
        start = i * clip_len_s
        end = min((i + 1) * clip_len_s, duration_s)
        bounds.append((start, end))
    return ClipGrid(clip_len_s=clip_len_s, boundaries=tuple(bounds))


# ---------------------------------------------------------------------------
# Annotation JSONL


def _sample_from_obj(obj: dict, kind: str, line_no: int, path) -> DatasetSample:
    def need(key, typ):
        if key not in obj:
            raise AnnotationParseError(path, line_no, f"missing required field '{key}'")
        val = obj[key]
        if typ is float and isinstance(val, int):
            val = float(val)
        if not isinstance(val, typ):
            raise AnnotationParseError(
                path, line_no, f"field '{key}' has type {type(val).__name__}")
        return val

    qid = need("qid", int)
    query = need("query", str)
    vid = need("vid", str)
    duration = need("duration", float)

    moments: list[MomentSpan] = []
    if "relevant_windows" in obj:
        windows = obj["relevant_windows"]
        if not isinstance(windows, list):
            raise AnnotationParseError(path, line_no, "relevant_windows must be a list")
        for w in windows:
            if not (isinstance(w, list) and len(w) == 2):
                raise AnnotationParseError(
                    path, line_no, "each relevant window must be a [start, end] pair")
            moments.append(MomentSpan(float(w[0]), float(w[1])))

    saliency = None
    if "relevant_clip_ids" in obj or "saliency_scores" in obj:
        clip_ids = obj.get("relevant_clip_ids")
        scores = obj.get("saliency_scores")
        if clip_ids is None or scores is None:
            raise AnnotationParseError(
                path, line_no,
                "relevant_clip_ids and saliency_scores must appear together")
        saliency = SaliencyAnnotation(
            clip_ids=tuple(clip_ids),
            scores=tuple(tuple(row) for row in scores),
        )

    sample = DatasetSample(
        query_id=qid,
        query_text=query,
        video_id=vid,
        duration_s=duration,
        gt_moments=tuple(moments),
        saliency=saliency,
        domain_tag=obj.get("domain"),
    )
    sample.validate_kind(kind)
    return sample


def parse_annotations(path, kind: str) -> list[DatasetSample]:
    """Load a JSONL annotation file and validate every sample for `kind`.

    Raises AnnotationParseError (with line number) on malformed lines and
    ValidationError (naming query_id and field) on invariant violations.
    Nothing is returned unless the whole file is valid.
    """
    if kind not in DATASET_KINDS:
        raise ValidationError(f"unknown dataset kind '{kind}'", field="kind")
    path = Path(path)
    samples: list[DatasetSample] = []
    seen_ids: set[int] = set()
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                obj = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise AnnotationParseError(path, line_no, f"invalid JSON ({exc.msg})")
            if not isinstance(obj, dict):
                raise AnnotationParseError(path, line_no, "line is not a JSON object")
            try:
                sample = _sample_from_obj(obj, kind, line_no, path)
            except ValidationError as exc:
                qid = obj.get("qid")
                if exc.query_id is None and qid is not None:
                    raise ValidationError(str(exc), query_id=qid) from exc
                raise
            if sample.query_id in seen_ids:
                raise ValidationError("duplicate query id in split",
                                      query_id=sample.query_id, field="qid")
            seen_ids.add(sample.query_id)
            samples.append(sample)
    return samples


def sample_to_obj(sample: DatasetSample) -> dict:
    obj: dict = {
        "qid": sample.query_id,
        "query": sample.query_text,
        "vid": sample.video_id,
        "duration": _round(sample.duration_s),
    }
    if sample.gt_moments:
        obj["relevant_windows"] = [[_round(m.start_s), _round(m.end_s)]
                                   for m in sample.gt_moments]
    if sample.saliency is not None:
        obj["relevant_clip_ids"] = list(sample.saliency.clip_ids)
        obj["saliency_scores"] = [list(row) for row in sample.saliency.scores]
    if sample.domain_tag is not None:
        obj["domain"] = sample.domain_tag
    return obj


def write_annotations(samples: Iterable[DatasetSample], path) -> None:
    """Serialize samples to annotation JSONL (floats rounded to 4 decimals)."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as f:
        for sample in samples:
            f.write(json.dumps(sample_to_obj(sample)))
            f.write("\n")


# ---------------------------------------------------------------------------
# Prediction JSONL


def write_predictions(records: Iterable[PredictionRecord], path) -> None:
    """Serialize prediction records to JSONL; invariants are enforced, not fixed."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            confs = [c for _, c in rec.moments]
            if any(b > a for a, b in zip(confs, confs[1:])):
                raise ValidationError("moments must be sorted by confidence descending",
                                      query_id=rec.query_id,
                                      field="pred_relevant_windows")
            obj = {
                "qid": rec.query_id,
                "pred_relevant_windows": [
                    [_round(m.start_s), _round(m.end_s), _round(c)]
                    for m, c in rec.moments
                ],
                "pred_saliency_scores": [_round(s) for s in rec.saliency_scores],
            }
            f.write(json.dumps(obj))
            f.write("\n")


def parse_predictions(path) -> list[PredictionRecord]:
    """Load a prediction JSONL file written by write_predictions."""
    path = Path(path)
    records: list[PredictionRecord] = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                obj = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise AnnotationParseError(path, line_no, f"invalid JSON ({exc.msg})")
            try:
                moments = tuple(
                    (MomentSpan(float(w[0]), float(w[1])), float(w[2]))
                    for w in obj["pred_relevant_windows"]
                )
                records.append(PredictionRecord(
                    query_id=int(obj["qid"]),
                    moments=moments,
                    saliency_scores=tuple(float(s)
                                          for s in obj["pred_saliency_scores"]),
                ))
            except KeyError as exc:
                raise AnnotationParseError(path, line_no, f"missing field {exc}")
    return records
