"""Three-step inference API: new_predictor() -> encode_video() -> predict(),
plus the span post-processing (scoring, temporal NMS, top-k) shared with the
evaluation harness.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .checkpoint import load_checkpoint
from .data import ClipGrid, MomentSpan
from .errors import MomentKitError, SessionStateError, ValidationError
from .features import (EXTRACTORS, FeatureExtractor, FeatureExtractorSpec,
                       FeaturePair, build_extractor, registered_extractor_names)
from .metrics import temporal_iou
from .model import MomentHighlightModel, span_cxw_to_interval

DEFAULT_NMS_THRESHOLD = 0.7
DEFAULT_TOP_K = 10


def temporal_nms(scored_spans: list[tuple[MomentSpan, float]],
                 iou_threshold: float) -> list[tuple[MomentSpan, float]]:
    """Greedy suppression by descending score: a span is kept iff its IoU with
    every already-kept span is <= iou_threshold."""
    ordered = sorted(enumerate(scored_spans), key=lambda t: (-t[1][1], t[0]))
    kept: list[tuple[MomentSpan, float]] = []
    for _, (span, score) in ordered:
        if all(temporal_iou(span, k) <= iou_threshold for k, _ in kept):
            kept.append((span, score))
    return kept


def rank_moments(spans_cw: np.ndarray, confidence_logits: np.ndarray,
                 duration_s: float,
                 nms_threshold: float = DEFAULT_NMS_THRESHOLD,
                 top_k: int = DEFAULT_TOP_K) -> list[tuple[MomentSpan, float]]:
    """Slot outputs -> ranked absolute moments: sigmoid scores, stable sort by
    score (ties by slot index), temporal NMS, then top-k."""
    scores = 1.0 / (1.0 + np.exp(-np.asarray(confidence_logits, dtype=np.float64)))
    order = np.lexsort((np.arange(scores.size), -scores))
    scored = [
        (span_cxw_to_interval(float(spans_cw[i, 0]), float(spans_cw[i, 1]),
                              duration_s), float(scores[i]))
        for i in order
    ]
    return temporal_nms(scored, nms_threshold)[:top_k]


@dataclass(frozen=True)
class PredictResult:
    """Ranked moments with scores in [0, 1] plus (clip start, score) saliency."""

    moments: tuple[tuple[MomentSpan, float], ...]
    saliency: tuple[tuple[float, float], ...]
    duration_s: float
    nms_threshold: float = DEFAULT_NMS_THRESHOLD

    def __post_init__(self):
        scores = [s for _, s in self.moments]
        if any(b > a for a, b in zip(scores, scores[1:])):
            raise ValidationError("moments must be sorted by score descending",
                                  field="moments")
        for span, score in self.moments:
            if not 0.0 <= score <= 1.0:
                raise ValidationError("moment scores must lie in [0, 1]",
                                      field="moments")
            if span.start_s < -1e-9 or span.end_s > self.duration_s + 1e-6:
                raise ValidationError("moment outside [0, duration]",
                                      field="moments")
        spans = [m for m, _ in self.moments]
        for i in range(len(spans)):
            for j in range(i + 1, len(spans)):
                if temporal_iou(spans[i], spans[j]) > self.nms_threshold + 1e-9:
                    raise ValidationError("returned moments overlap beyond the "
                                          "NMS threshold", field="moments")


@dataclass
class EncodedVideo:
    video: np.ndarray
    grid: ClipGrid

    @property
    def duration_s(self) -> float:
        return self.grid.duration_s


class PredictorSession:
    """Holds loaded model parameters, the feature extractor, and at most one
    encoded video. encode_video and predict must not run concurrently on a
    single session; the lock is for callers that share sessions."""

    def __init__(self, model: MomentHighlightModel, extractor: FeatureExtractor,
                 clip_len_s: float, device: torch.device,
                 nms_threshold: float = DEFAULT_NMS_THRESHOLD,
                 top_k: int = DEFAULT_TOP_K):
        self.model = model.to(device).eval()
        self.extractor = extractor
        self.clip_len_s = clip_len_s
        self.device = device
        self.nms_threshold = nms_threshold
        self.top_k = top_k
        self.encoded: Optional[EncodedVideo] = None
        self.lock = threading.Lock()

    def encode_video(self, source) -> EncodedVideo:
        """Extract and store video features; replaces any prior encoding."""
        video, grid = self.extractor.extract_video(source, self.clip_len_s)
        if video.shape[0] < 1:
            raise MomentKitError("video produced zero clips")
        if not np.isfinite(video).all():
            raise ValidationError("video features contain NaN/Inf", field="video")
        self.encoded = EncodedVideo(video=video, grid=grid)
        return self.encoded

    def attach_encoded(self, encoded: EncodedVideo) -> None:
        """Reuse a previously computed encoding (server-side cache path)."""
        self.encoded = encoded

    def predict(self, query: str) -> PredictResult:
        if self.encoded is None:
            raise SessionStateError("call encode_video first")
        if not query or not query.strip():
            raise ValidationError("query must be non-empty", field="query")
        text = self.extractor.extract_text(query)
        pair = FeaturePair(video=self.encoded.video, text=text,
                           clip_grid=self.encoded.grid).validate()
        span_pred, sal = self.model.predict_single(pair)
        moments = rank_moments(span_pred.spans, span_pred.confidence_logits,
                               self.encoded.duration_s,
                               self.nms_threshold, self.top_k)
        saliency = tuple(
            (float(start), float(score))
            for start, score in zip(self.encoded.grid.starts(), sal.scores)
        )
        return PredictResult(moments=tuple(moments), saliency=saliency,
                             duration_s=self.encoded.duration_s,
                             nms_threshold=self.nms_threshold)


def _resolve_device(device: str) -> torch.device:
    name = {"accelerator": "cuda"}.get(device, device)
    if name == "cuda" and not torch.cuda.is_available():
        raise MomentKitError("accelerator requested but no CUDA device available")
    return torch.device(name)


def new_predictor(checkpoint_path, device: str = "cpu",
                  feature_name: str = "trivial",
                  extractor_spec: FeatureExtractorSpec | None = None,
                  nms_threshold: float = DEFAULT_NMS_THRESHOLD,
                  top_k: int = DEFAULT_TOP_K) -> PredictorSession:
    """Load a checkpoint and build a ready session (no video encoded yet).

    The extractor's dims must match the dims the checkpoint was trained with;
    by default they are taken from the checkpoint itself.
    """
    if feature_name not in EXTRACTORS:
        raise MomentKitError(
            f"unknown feature extractor '{feature_name}'; registered: "
            f"{registered_extractor_names()}")
    ckpt = load_checkpoint(Path(checkpoint_path))
    if extractor_spec is None:
        extractor_spec = FeatureExtractorSpec(
            name=feature_name, dv=ckpt.dv, dt=ckpt.dt,
            seed=int(ckpt.extra.get("feature_seed", 0)))
    else:
        if extractor_spec.dv != ckpt.dv:
            raise MomentKitError(
                f"video feature dim {extractor_spec.dv} != model dim {ckpt.dv}")
        if extractor_spec.dt != ckpt.dt:
            raise MomentKitError(
                f"text feature dim {extractor_spec.dt} != model dim {ckpt.dt}")
        if extractor_spec.name != feature_name:
            extractor_spec = FeatureExtractorSpec(
                name=feature_name, dv=extractor_spec.dv, dt=extractor_spec.dt,
                seed=extractor_spec.seed)
    model = ckpt.build_model()
    clip_len_s = float(ckpt.extra.get("clip_len_s", 2.0))
    return PredictorSession(model=model, extractor=build_extractor(extractor_spec),
                            clip_len_s=clip_len_s, device=_resolve_device(device),
                            nms_threshold=nms_threshold, top_k=top_k)
