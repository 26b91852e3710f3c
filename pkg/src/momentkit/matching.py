"""Hungarian assignment of ground-truth moments to decoder slots.

Cost per (slot, gt) pair: w_l1 * L1 distance in (center, width) space
+ w_giou * (1 - generalized IoU) - w_cls * foreground probability. The
returned assignment is an injective gt -> slot map minimizing total cost.
"""

from __future__ import annotations

import numpy as np
import torch
from scipy.optimize import linear_sum_assignment

from .data import MomentSpan
from .errors import MomentKitError
from .model import ModelConfig, SpanPrediction

Assignment = tuple[tuple[int, int], ...]  # ((gt_index, slot_index), ...)


def spans_cw_to_se(spans: torch.Tensor) -> torch.Tensor:
    """(..., 2) center/width -> start/end."""
    center, width = spans[..., 0], spans[..., 1]
    return torch.stack([center - width / 2.0, center + width / 2.0], dim=-1)


def generalized_iou_1d(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Pairwise 1-D generalized IoU between interval sets (N, 2) and (M, 2)."""
    a_start, a_end = a[:, 0, None], a[:, 1, None]
    b_start, b_end = b[None, :, 0], b[None, :, 1]
    inter = (torch.min(a_end, b_end) - torch.max(a_start, b_start)).clamp(min=0)
    union = (a_end - a_start) + (b_end - b_start) - inter
    hull = torch.max(a_end, b_end) - torch.min(a_start, b_start)
    iou = inter / union.clamp(min=1e-12)
    return iou - (hull - union) / hull.clamp(min=1e-12)


def moments_to_cw(moments, duration_s: float) -> np.ndarray:
    """Ground-truth MomentSpans (seconds) -> normalized (center, width) rows."""
    out = np.empty((len(moments), 2), dtype=np.float64)
    for i, m in enumerate(moments):
        out[i, 0] = (m.start_s + m.end_s) / 2.0 / duration_s
        out[i, 1] = (m.end_s - m.start_s) / duration_s
    return out


def match_cost_matrix(pred_spans: torch.Tensor, pred_probs: torch.Tensor,
                      gt_cw: torch.Tensor, config: ModelConfig) -> torch.Tensor:
    """(K, G) assignment cost; differentiable pieces are reused by the loss."""
    l1 = torch.cdist(pred_spans, gt_cw, p=1)
    giou = generalized_iou_1d(spans_cw_to_se(pred_spans), spans_cw_to_se(gt_cw))
    return (config.w_l1 * l1 + config.w_giou * (1.0 - giou)
            - config.w_cls * pred_probs.unsqueeze(1))


def match_spans(pred: SpanPrediction, gt_moments: list[MomentSpan],
                config: ModelConfig, duration_s: float = 1.0) -> Assignment:
    """Minimum-cost injective assignment of gt moments to prediction slots.

    gt_moments are interpreted in seconds relative to duration_s; pass
    duration_s=1.0 when they are already normalized.
    """
    num_slots = pred.spans.shape[0]
    if len(gt_moments) > num_slots:
        raise MomentKitError(
            f"{len(gt_moments)} ground-truth moments exceed the {num_slots} "
            f"available slots; increase model.num_slots")
    if not gt_moments:
        return ()
    pred_spans = torch.from_numpy(np.asarray(pred.spans, dtype=np.float64))
    probs = torch.sigmoid(
        torch.from_numpy(np.asarray(pred.confidence_logits, dtype=np.float64)))
    gt_cw = torch.from_numpy(moments_to_cw(gt_moments, duration_s))
    cost = match_cost_matrix(pred_spans, probs, gt_cw, config).numpy()
    slot_idx, gt_idx = linear_sum_assignment(cost)
    return tuple(sorted((int(g), int(s)) for s, g in zip(slot_idx, gt_idx)))
