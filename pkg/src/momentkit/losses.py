"""Training losses for the span model.

Total loss = w_l1 * L1 on matched (center, width) pairs
           + w_giou * (1 - gIoU) on matched pairs
           + w_cls * binary cross-entropy (matched slots foreground)
           + w_sal * pairwise hinge pushing in-moment clip scores above
             out-of-moment scores by a margin.

The optional negative-pair term compares saliency under the matched query
against saliency under a mismatched one, clip by clip.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from .data import DatasetSample
from .errors import ShapeError
from .matching import Assignment, generalized_iou_1d, spans_cw_to_se
from .model import ModelConfig, SaliencyScores, SpanPrediction


def in_moment_mask(sample: DatasetSample, num_clips: int,
                   clip_len_s: float | None = None) -> np.ndarray:
    """Boolean mask of clips whose midpoint falls inside a ground-truth moment.

    Without gt moments (HD-only data) a clip counts as positive when its mean
    saliency label is at least 4.5.
    """
    if sample.gt_moments:
        if clip_len_s is None:
            clip_len_s = sample.duration_s / num_clips
        mids = (np.arange(num_clips) + 0.5) * clip_len_s
        mask = np.zeros(num_clips, dtype=bool)
        for m in sample.gt_moments:
            mask |= (mids >= m.start_s) & (mids < m.end_s)
        return mask
    mask = np.zeros(num_clips, dtype=bool)
    if sample.saliency is not None:
        for cid, row in zip(sample.saliency.clip_ids, sample.saliency.scores):
            if cid < num_clips and float(np.mean(row)) >= 4.5:
                mask[cid] = True
    return mask


def saliency_margin_hinge(scores: torch.Tensor, positive: torch.Tensor,
                          margin: float) -> torch.Tensor:
    """Mean over (positive, negative) clip pairs of
    max(0, margin + negative_score - positive_score)."""
    pos = scores[positive]
    neg = scores[~positive]
    if pos.numel() == 0 or neg.numel() == 0:
        return scores.sum() * 0.0
    return F.relu(margin + neg.unsqueeze(0) - pos.unsqueeze(1)).mean()


def loss_terms(spans: torch.Tensor, logits: torch.Tensor,
               saliency: torch.Tensor, gt_cw: torch.Tensor,
               positive_clips: torch.Tensor, assignment: Assignment,
               config: ModelConfig) -> dict[str, torch.Tensor]:
    """Weighted loss components for one sample; total = sum of components.

    spans (K, 2), logits (K,), saliency (L,), gt_cw (G, 2) normalized,
    positive_clips (L,) bool.
    """
    num_slots = spans.shape[0]
    zero = spans.sum() * 0.0

    cls_target = torch.zeros(num_slots, dtype=spans.dtype, device=spans.device)
    if assignment:
        gt_idx = torch.as_tensor([g for g, _ in assignment], device=spans.device)
        slot_idx = torch.as_tensor([s for _, s in assignment], device=spans.device)
        matched = spans[slot_idx]
        targets = gt_cw[gt_idx]
        l1 = torch.abs(matched - targets).sum(dim=1).mean()
        giou = generalized_iou_1d(spans_cw_to_se(matched),
                                  spans_cw_to_se(targets)).diagonal()
        giou_term = (1.0 - giou).mean()
        cls_target[slot_idx] = 1.0
    else:
        l1 = zero
        giou_term = zero

    cls = F.binary_cross_entropy_with_logits(logits, cls_target)
    sal = saliency_margin_hinge(saliency, positive_clips, config.sal_margin)

    components = {
        "l1": config.w_l1 * l1,
        "giou": config.w_giou * giou_term,
        "cls": config.w_cls * cls,
        "saliency": config.w_sal * sal,
    }
    components["total"] = sum(components.values())
    return components


def compute_loss(pred: SpanPrediction, saliency_pred: SaliencyScores,
                 sample: DatasetSample, assignment: Assignment,
                 config: ModelConfig,
                 clip_len_s: float | None = None) -> tuple[float, dict[str, float]]:
    """Loss on plain numpy predictions; returns (total, component map)."""
    from .matching import moments_to_cw

    spans = torch.from_numpy(np.asarray(pred.spans, dtype=np.float64))
    logits = torch.from_numpy(np.asarray(pred.confidence_logits, dtype=np.float64))
    sal = torch.from_numpy(np.asarray(saliency_pred.scores, dtype=np.float64))
    gt_cw = torch.from_numpy(moments_to_cw(list(sample.gt_moments),
                                           sample.duration_s))
    positive = torch.from_numpy(in_moment_mask(sample, sal.shape[0], clip_len_s))
    terms = loss_terms(spans, logits, sal, gt_cw, positive, assignment, config)
    total = float(terms.pop("total"))
    return total, {k: float(v) for k, v in terms.items()}


def neg_pair_hinge(matched_scores: torch.Tensor, negative_scores: torch.Tensor,
                   margin: float = 0.2) -> torch.Tensor:
    if matched_scores.shape != negative_scores.shape:
        raise ShapeError(
            f"matched/negative saliency shapes differ: "
            f"{tuple(matched_scores.shape)} vs {tuple(negative_scores.shape)}")
    if matched_scores.numel() == 0:
        return matched_scores.sum() * 0.0
    return F.relu(margin + negative_scores - matched_scores).mean()


def neg_pair_saliency_loss(saliency_matched, saliency_negative,
                           margin: float = 0.2) -> float:
    """Hinge penalty when mismatched-query saliency approaches matched-query
    saliency; callers pass the in-moment clip scores of both forwards."""
    matched = torch.as_tensor(np.asarray(saliency_matched, dtype=np.float64))
    negative = torch.as_tensor(np.asarray(saliency_negative, dtype=np.float64))
    return float(neg_pair_hinge(matched, negative, margin))
