"""Retrieval and highlight metrics: R1@theta, mAP@theta, average mAP, HD mAP,
HIT@1, and per-domain aggregation.

Conventions (documented so golden files stay stable):
- an IoU counts only when strictly greater than the threshold;
- AP is retrieval-style (mean precision at true-positive ranks), with greedy
  rank-order matching and one-to-one ground-truth consumption;
- clip rankings break predicted-score ties by lowest clip index;
- HIT@1 and HD mAP average per-annotator results before averaging queries;
- queries with zero positive clips for an annotator contribute AP 0;
- reductions run in ascending query id so results are bitwise reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .data import DatasetSample, MomentSpan, PredictionRecord
from .errors import MomentKitError, ValidationError

DEFAULT_AVG_MAP_GRID = tuple(0.5 + 0.05 * i for i in range(10))


@dataclass(frozen=True)
class MetricConfig:
    r1_thresholds: tuple[float, ...] = (0.5, 0.7)
    map_thresholds: tuple[float, ...] = (0.5, 0.75)
    avg_map_grid: tuple[float, ...] = DEFAULT_AVG_MAP_GRID
    hd_positive_level: int = 5
    hd_positive_mode: str = "level"  # "level" or "top_half"

    def __post_init__(self):
        for th in (*self.r1_thresholds, *self.map_thresholds, *self.avg_map_grid):
            if not 0.0 < th <= 1.0:
                raise ValidationError("thresholds must lie in (0, 1]",
                                      field="thresholds")
        grid = self.avg_map_grid
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValidationError("avg_map_grid must be strictly increasing",
                                  field="avg_map_grid")
        if self.hd_positive_mode not in ("level", "top_half"):
            raise ValidationError("hd_positive_mode must be 'level' or 'top_half'",
                                  field="hd_positive_mode")


def temporal_iou(a: MomentSpan, b: MomentSpan) -> float:
    """Intersection over union of two spans; 0 when disjoint."""
    inter = min(a.end_s, b.end_s) - max(a.start_s, b.start_s)
    if inter <= 0:
        return 0.0
    union = a.length_s + b.length_s - inter
    return inter / union


def _index_predictions(predictions: Iterable[PredictionRecord],
                       samples: Sequence[DatasetSample]) -> dict[int, PredictionRecord]:
    by_qid = {p.query_id: p for p in predictions}
    missing = [s.query_id for s in samples if s.query_id not in by_qid]
    if missing:
        raise MomentKitError(f"predictions missing for query ids {missing}")
    return by_qid


def recall1_at(predictions: Iterable[PredictionRecord],
               samples: Sequence[DatasetSample], theta: float) -> float:
    """Percentage of queries whose top-1 moment beats IoU theta on some gt."""
    by_qid = _index_predictions(predictions, samples)
    hits = 0
    ordered = sorted(samples, key=lambda s: s.query_id)
    for sample in ordered:
        if not sample.gt_moments:
            raise MomentKitError(f"query {sample.query_id} has no gt moments")
        record = by_qid[sample.query_id]
        if not record.moments:
            continue
        top1 = record.moments[0][0]
        if max(temporal_iou(top1, gt) for gt in sample.gt_moments) > theta:
            hits += 1
    return 100.0 * hits / len(ordered)


def average_precision_single_query(ranked_moments: Sequence[MomentSpan],
                                   gt_moments: Sequence[MomentSpan],
                                   theta: float) -> float:
    """Retrieval-style AP of one ranked moment list against gt moments.

    Walking down the ranking, a prediction is a true positive when its IoU
    with some not-yet-consumed gt exceeds theta (the best such gt is
    consumed); AP averages precision-at-rank over all gt, unmatched gt
    contributing zero.
    """
    if not gt_moments:
        return 0.0
    consumed = [False] * len(gt_moments)
    precisions = []
    tp = 0
    for rank, pred in enumerate(ranked_moments, start=1):
        best_iou, best_idx = theta, -1
        for gi, gt in enumerate(gt_moments):
            if consumed[gi]:
                continue
            iou = temporal_iou(pred, gt)
            if iou > best_iou:
                best_iou, best_idx = iou, gi
        if best_idx >= 0:
            consumed[best_idx] = True
            tp += 1
            precisions.append(tp / rank)
    return sum(precisions) / len(gt_moments)


def map_at(predictions: Iterable[PredictionRecord],
           samples: Sequence[DatasetSample], theta: float) -> float:
    by_qid = _index_predictions(predictions, samples)
    ordered = sorted(samples, key=lambda s: s.query_id)
    total = 0.0
    for sample in ordered:
        ranked = [m for m, _ in by_qid[sample.query_id].moments]
        total += average_precision_single_query(ranked, sample.gt_moments, theta)
    return 100.0 * total / len(ordered)


def map_suite(predictions: Sequence[PredictionRecord],
              samples: Sequence[DatasetSample],
              config: MetricConfig) -> dict[str, float]:
    """mAP at each configured threshold plus the grid-averaged mAP."""
    out = {}
    for theta in config.map_thresholds:
        out[f"map@{theta:g}"] = map_at(predictions, samples, theta)
    grid_vals = [map_at(predictions, samples, theta)
                 for theta in config.avg_map_grid]
    out["map@avg"] = sum(grid_vals) / len(grid_vals)
    return out


def _top_clip(scores: Sequence[float]) -> int:
    """Highest-scored clip, ties broken by lowest index."""
    arr = np.asarray(scores, dtype=np.float64)
    return int(np.argmax(arr))


def _clip_ranking(scores: Sequence[float]) -> np.ndarray:
    """Clip indices sorted by score descending, ties by lowest index."""
    arr = np.asarray(scores, dtype=np.float64)
    return np.lexsort((np.arange(arr.size), -arr))


def _annotator_positives(sample: DatasetSample, annotator: int,
                         config: MetricConfig) -> set[int]:
    sal = sample.saliency
    labels = sal.labels_for(annotator)
    if config.hd_positive_mode == "level":
        return {cid for cid, lab in labels.items()
                if lab == config.hd_positive_level}
    # top_half: highest-labeled half of this annotator's clips
    ranked = sorted(labels, key=lambda cid: (-labels[cid], cid))
    return set(ranked[: math.ceil(len(ranked) / 2)])


def hit_at_1(predictions: Iterable[PredictionRecord],
             samples: Sequence[DatasetSample], config: MetricConfig) -> float:
    """Hit ratio of the top-scored clip being labeled positive, averaged over
    annotators then queries."""
    by_qid = _index_predictions(predictions, samples)
    ordered = sorted(samples, key=lambda s: s.query_id)
    total = 0.0
    for sample in ordered:
        if sample.saliency is None:
            raise MomentKitError(f"query {sample.query_id} has no saliency labels")
        record = by_qid[sample.query_id]
        top = _top_clip(record.saliency_scores)
        n_annot = sample.saliency.num_annotators
        hits = sum(
            1 for a in range(n_annot)
            if top in _annotator_positives(sample, a, config)
        )
        total += hits / n_annot
    return 100.0 * total / len(ordered)


def hd_map_per_query(record: PredictionRecord, sample: DatasetSample,
                     config: MetricConfig) -> float:
    """Annotator-averaged AP of the predicted clip ranking, in percent."""
    if sample.saliency is None:
        raise MomentKitError(f"query {sample.query_id} has no saliency labels")
    ranking = _clip_ranking(record.saliency_scores)
    n_annot = sample.saliency.num_annotators
    ap_sum = 0.0
    for a in range(n_annot):
        positives = _annotator_positives(sample, a, config)
        if not positives:
            continue  # zero-positive annotator contributes AP 0
        tp = 0
        precisions = []
        for rank, cid in enumerate(ranking, start=1):
            if int(cid) in positives:
                tp += 1
                precisions.append(tp / rank)
        ap_sum += sum(precisions) / len(positives)
    return 100.0 * ap_sum / n_annot


def hd_map(predictions: Iterable[PredictionRecord],
           samples: Sequence[DatasetSample], config: MetricConfig) -> float:
    by_qid = _index_predictions(predictions, samples)
    ordered = sorted(samples, key=lambda s: s.query_id)
    total = sum(hd_map_per_query(by_qid[s.query_id], s, config) for s in ordered)
    return total / len(ordered)


def tvsum_domain_report(per_query_values: dict[int, float],
                        samples: Sequence[DatasetSample]) -> dict[str, float]:
    """Per-domain means of per-query HD mAP plus their unweighted average."""
    domains: dict[str, list[float]] = {}
    for sample in sorted(samples, key=lambda s: s.query_id):
        if sample.domain_tag is None:
            raise MomentKitError(f"query {sample.query_id} has no domain tag")
        domains.setdefault(sample.domain_tag, []).append(
            per_query_values[sample.query_id])
    report = {dom: sum(vals) / len(vals)
              for dom, vals in sorted(domains.items())}
    report["avg"] = sum(report.values()) / len(report)
    return report


# ---------------------------------------------------------------------------
# Reports


@dataclass(frozen=True)
class MetricReport:
    """All metric values for a split, in percent."""

    split: str
    num_samples: int
    values: dict[str, float]
    domain_values: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for key, val in {**self.values, **self.domain_values}.items():
            if not -1e-9 <= val <= 100.0 + 1e-9:
                raise ValidationError(f"metric '{key}' out of [0, 100]: {val}",
                                      field=key)

    def to_text(self) -> str:
        lines = [f"split {self.split}", f"samples {self.num_samples}"]
        lines += [f"{k} {v:.1f}" for k, v in self.values.items()]
        lines += [f"hd_map/{k} {v:.1f}" for k, v in self.domain_values.items()]
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict:
        out = {"split": self.split, "num_samples": self.num_samples,
               "values": dict(self.values)}
        if self.domain_values:
            out["domain_values"] = dict(self.domain_values)
        return out

    def write(self, base_path) -> tuple[Path, Path]:
        """Write the one-decimal text report and its full-precision twin."""
        base = Path(base_path)
        txt, js = base.with_suffix(".txt"), base.with_suffix(".json")
        txt.write_text(self.to_text(), encoding="utf-8")
        with open(js, "w", encoding="utf-8") as f:
            json.dump(self.to_json_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        return txt, js


def compute_report(predictions: Sequence[PredictionRecord],
                   samples: Sequence[DatasetSample], config: MetricConfig,
                   kind: str, split: str = "val") -> MetricReport:
    """Assemble the metric set appropriate for a dataset kind."""
    values: dict[str, float] = {}
    domain_values: dict[str, float] = {}
    if kind in ("mr_hd", "mr"):
        for theta in config.r1_thresholds:
            values[f"r1@{theta:g}"] = recall1_at(predictions, samples, theta)
        values.update(map_suite(predictions, samples, config))
    if kind in ("mr_hd", "hd"):
        values["hd_map"] = hd_map(predictions, samples, config)
        values["hit@1"] = hit_at_1(predictions, samples, config)
        if all(s.domain_tag is not None for s in samples):
            by_qid = {p.query_id: p for p in predictions}
            per_query = {
                s.query_id: hd_map_per_query(by_qid[s.query_id], s, config)
                for s in samples
            }
            domain_values = tvsum_domain_report(per_query, samples)
    return MetricReport(split=split, num_samples=len(samples), values=values,
                        domain_values=domain_values)
