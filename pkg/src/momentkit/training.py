"""Seed-exact training and evaluation harness.

train_run() consumes a validated TrainConfig, trains with AdamW (single lr
drop, gradient-norm clipping), and writes every artifact needed to reproduce
the run under results_dir: the effective config, a feature manifest with
file hashes, periodic checkpoints, and a RunLog. Features are always read
from .lhf files; extraction never happens here.

Determinism contract: same config + seed + machine give identical per-epoch
losses, metrics, and checkpoint bytes. Wall-clock timings are recorded but
excluded from the canonical RunLog bytes used for comparisons.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from . import __version__
from .checkpoint import (Checkpoint, load_checkpoint, model_state_tensors,
                         optimizer_state_tensors, restore_optimizer_state,
                         save_checkpoint)
from .data import (DatasetSample, PredictionRecord, clip_grid,
                   parse_annotations, write_predictions)
from .errors import CheckpointError, MomentKitError
from .features import load_features
from .losses import in_moment_mask, loss_terms, neg_pair_hinge
from .matching import match_cost_matrix, moments_to_cw
from .metrics import MetricReport, compute_report
from .model import MomentHighlightModel
from .predictor import rank_moments
from .train_config import TrainConfig

LOSS_KEYS = ("total", "l1", "giou", "cls", "saliency", "neg_pair")


def _set_deterministic() -> None:
    torch.set_num_threads(1)


@dataclass
class RunLog:
    header: dict
    records: list[dict] = field(default_factory=list)

    def canonical_bytes(self) -> bytes:
        """Serialization with wall-clock timings stripped; two runs of the
        same config and seed must agree on these bytes exactly."""
        records = [{k: v for k, v in rec.items() if k != "wall_time_s"}
                   for rec in self.records]
        blob = {"header": self.header, "records": records}
        return json.dumps(blob, sort_keys=True).encode("utf-8")

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"header": self.header, "records": self.records}, f,
                      indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path) -> "RunLog":
        with open(path, encoding="utf-8") as f:
            blob = json.load(f)
        return cls(header=blob["header"], records=blob["records"])


@dataclass
class LoadedSample:
    sample: DatasetSample
    video: np.ndarray
    text: np.ndarray
    gt_cw: np.ndarray
    positive: np.ndarray

    @property
    def n_clips(self) -> int:
        return self.video.shape[0]


def load_split(annotations_path, config: TrainConfig) -> list[LoadedSample]:
    """Parse one split and attach its .lhf features, failing fast on any
    annotation/feature mismatch."""
    samples = parse_annotations(annotations_path, config.data.kind)
    feature_dir = Path(config.data.feature_dir)
    video_cache: dict[str, np.ndarray] = {}
    items: list[LoadedSample] = []
    for sample in samples:
        vpath = feature_dir / "video" / f"{sample.video_id}.lhf"
        tpath = feature_dir / "text" / f"{sample.query_id}.lhf"
        if sample.video_id not in video_cache:
            if not vpath.exists():
                raise MomentKitError(
                    f"unknown video_id '{sample.video_id}': no feature file {vpath}")
            video_cache[sample.video_id] = load_features(vpath)
        if not tpath.exists():
            raise MomentKitError(
                f"no text features for query {sample.query_id}: {tpath}")
        video = video_cache[sample.video_id]
        text = load_features(tpath)
        if video.shape[1] != config.features.dv:
            raise MomentKitError(
                f"video feature dim {video.shape[1]} != configured dv "
                f"{config.features.dv} for '{sample.video_id}'")
        if text.shape[1] != config.features.dt:
            raise MomentKitError(
                f"text feature dim {text.shape[1]} != configured dt "
                f"{config.features.dt} for query {sample.query_id}")
        grid = clip_grid(sample.duration_s, config.data.clip_len_s)
        if video.shape[0] != grid.num_clips:
            raise MomentKitError(
                f"video '{sample.video_id}' has {video.shape[0]} feature rows "
                f"but duration {sample.duration_s} implies {grid.num_clips} clips")
        items.append(LoadedSample(
            sample=sample,
            video=video,
            text=text,
            gt_cw=moments_to_cw(list(sample.gt_moments), sample.duration_s),
            positive=in_moment_mask(sample, grid.num_clips,
                                    config.data.clip_len_s),
        ))
    return items


def feature_manifest(items: list[LoadedSample],
                     config: TrainConfig) -> dict[str, str]:
    feature_dir = Path(config.data.feature_dir)
    paths = set()
    for item in items:
        paths.add(feature_dir / "video" / f"{item.sample.video_id}.lhf")
        paths.add(feature_dir / "text" / f"{item.sample.query_id}.lhf")
    out = {}
    for p in sorted(paths):
        out[str(p)] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


def _collate(batch: list[LoadedSample]):
    bsz = len(batch)
    max_l = max(item.n_clips for item in batch)
    max_t = max(item.text.shape[0] for item in batch)
    dv, dt = batch[0].video.shape[1], batch[0].text.shape[1]
    video = torch.zeros(bsz, max_l, dv)
    text = torch.zeros(bsz, max_t, dt)
    vmask = torch.zeros(bsz, max_l, dtype=torch.bool)
    tmask = torch.zeros(bsz, max_t, dtype=torch.bool)
    for i, item in enumerate(batch):
        l, t = item.n_clips, item.text.shape[0]
        video[i, :l] = torch.from_numpy(item.video)
        text[i, :t] = torch.from_numpy(item.text)
        vmask[i, :l] = True
        tmask[i, :t] = True
    return video, text, vmask, tmask


def _match_batch_sample(spans: torch.Tensor, logits: torch.Tensor,
                        gt_cw: torch.Tensor, config) -> tuple[tuple[int, int], ...]:
    if gt_cw.shape[0] == 0:
        return ()
    if gt_cw.shape[0] > spans.shape[0]:
        raise MomentKitError(
            f"{gt_cw.shape[0]} ground-truth moments exceed the {spans.shape[0]} "
            f"available slots; increase model.num_slots")
    from scipy.optimize import linear_sum_assignment

    with torch.no_grad():
        cost = match_cost_matrix(spans.detach(), torch.sigmoid(logits.detach()),
                                 gt_cw, config).numpy()
    slot_idx, gt_idx = linear_sum_assignment(cost)
    return tuple(sorted((int(g), int(s)) for s, g in zip(slot_idx, gt_idx)))


def _batch_loss(model, batch, config: TrainConfig):
    video, text, vmask, tmask = _collate(batch)
    out = model(video, text, vmask, tmask)
    comps = {key: 0.0 for key in LOSS_KEYS}
    total = None
    for b, item in enumerate(batch):
        l = item.n_clips
        gt_cw = torch.from_numpy(item.gt_cw).to(video.dtype)
        positive = torch.from_numpy(item.positive)
        assignment = _match_batch_sample(out["spans"][b], out["logits"][b],
                                         gt_cw, config.model)
        terms = loss_terms(out["spans"][b], out["logits"][b],
                           out["saliency"][b, :l], gt_cw, positive,
                           assignment, config.model)
        sample_total = terms.pop("total")
        total = sample_total if total is None else total + sample_total
        for key, val in terms.items():
            comps[key] += float(val.detach())

    if config.model.neg_pair and len(batch) >= 2:
        neg_text = torch.roll(text, shifts=1, dims=0)
        neg_tmask = torch.roll(tmask, shifts=1, dims=0)
        out_neg = model(video, neg_text, vmask, neg_tmask)
        neg_total = None
        for b, item in enumerate(batch):
            mask = torch.from_numpy(item.positive)
            if not bool(mask.any()):
                continue
            pos_scores = out["saliency"][b, :item.n_clips][mask]
            neg_scores = out_neg["saliency"][b, :item.n_clips][mask]
            term = neg_pair_hinge(pos_scores, neg_scores,
                                  config.model.sal_margin)
            neg_total = term if neg_total is None else neg_total + term
        if neg_total is not None:
            total = total + neg_total
            comps["neg_pair"] += float(neg_total.detach())

    loss = total / len(batch)
    comps = {k: v / len(batch) for k, v in comps.items()}
    comps["total"] = float(loss.detach())
    return loss, comps


def predict_records(model: MomentHighlightModel, items: list[LoadedSample],
                    nms_threshold: float, top_k: int,
                    batch_size: int = 32) -> list[PredictionRecord]:
    """Forward a split and post-process into prediction records."""
    model.eval()
    records: list[PredictionRecord] = []
    with torch.no_grad():
        for start in range(0, len(items), batch_size):
            batch = items[start:start + batch_size]
            video, text, vmask, tmask = _collate(batch)
            out = model(video, text, vmask, tmask)
            for b, item in enumerate(batch):
                l = item.n_clips
                spans = out["spans"][b].numpy().astype(np.float64)
                logits = out["logits"][b].numpy().astype(np.float64)
                saliency = out["saliency"][b, :l].numpy().astype(np.float64)
                moments = rank_moments(spans, logits, item.sample.duration_s,
                                       nms_threshold, top_k)
                records.append(PredictionRecord(
                    query_id=item.sample.query_id,
                    moments=tuple(moments),
                    saliency_scores=tuple(float(s) for s in saliency),
                ))
    return records


def _save_train_checkpoint(path, model, optimizer, config: TrainConfig,
                           epoch: int, rng: np.random.Generator) -> Path:
    tensors = model_state_tensors(model)
    tensors.update(optimizer_state_tensors(optimizer, model))
    tensors["rng.torch"] = torch.get_rng_state().numpy()
    return save_checkpoint(
        path,
        model_config=config.model,
        dv=config.features.dv,
        dt=config.features.dt,
        epoch=epoch,
        seed=config.run.seed,
        tensors=tensors,
        config_hash=config.config_hash(),
        model_hash=config.model_section_hash(),
        extra={
            "clip_len_s": config.data.clip_len_s,
            "feature_name": config.features.name,
            "feature_seed": config.features.seed,
            "kind": config.data.kind,
            "code_version": __version__,
        },
        numpy_rng_state=rng.bit_generator.state,
    )


def train_run(config: TrainConfig,
              resume_from=None) -> tuple[Path, RunLog]:
    """Train per the config; returns (final checkpoint path, run log)."""
    _set_deterministic()
    results_dir = Path(config.run.results_dir)
    results_dir.mkdir(parents=True, exist_ok=True)

    train_items = load_split(config.data.train_annotations, config)
    val_items = (load_split(config.data.val_annotations, config)
                 if config.data.val_annotations is not None else [])
    if not train_items:
        raise MomentKitError("training split is empty")

    config.save_effective(results_dir / "effective_config.yaml")
    manifest = feature_manifest(train_items + val_items, config)
    with open(results_dir / "features_manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")

    torch.manual_seed(config.run.seed)
    rng = np.random.default_rng(config.run.seed)
    model = MomentHighlightModel(config.model, config.features.dv,
                                 config.features.dt)
    optimizer = torch.optim.AdamW(model.parameters(), lr=config.optim.lr,
                                  weight_decay=config.optim.weight_decay)

    start_epoch = 1
    header = {
        "config_hash": config.config_hash(),
        "seed": config.run.seed,
        "code_version": __version__,
    }
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        if ckpt.model_hash != config.model_section_hash():
            raise CheckpointError(
                f"checkpoint model hash {ckpt.model_hash} does not match config "
                f"model hash {config.model_section_hash()}")
        model.load_state_dict({k: torch.from_numpy(v.copy())
                               for k, v in ckpt.model_tensors().items()})
        restore_optimizer_state(optimizer, model, ckpt.tensors)
        torch.set_rng_state(torch.from_numpy(ckpt.tensors["rng.torch"].copy()))
        rng = np.random.default_rng()
        rng.bit_generator.state = ckpt.numpy_rng_state
        start_epoch = ckpt.epoch + 1
        header["resumed_from_epoch"] = ckpt.epoch

    runlog = RunLog(header=header)
    n = len(train_items)
    batch_size = min(config.optim.batch_size, n)

    for epoch in range(start_epoch, config.optim.epochs + 1):
        t0 = time.perf_counter()
        lr = config.optim.lr * (0.1 if epoch > config.optim.lr_drop_epoch else 1.0)
        for group in optimizer.param_groups:
            group["lr"] = lr

        model.train()
        perm = rng.permutation(n)
        epoch_comps = {key: 0.0 for key in LOSS_KEYS}
        n_batches = 0
        for start in range(0, n, batch_size):
            batch = [train_items[i] for i in perm[start:start + batch_size]]
            loss, comps = _batch_loss(model, batch, config)
            optimizer.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(),
                                           config.optim.grad_clip)
            optimizer.step()
            for key in LOSS_KEYS:
                epoch_comps[key] += comps[key]
            n_batches += 1
        losses = {key: epoch_comps[key] / n_batches for key in LOSS_KEYS}

        metrics = None
        is_last = epoch == config.optim.epochs
        if val_items and (epoch % config.run.eval_every == 0 or is_last):
            records = predict_records(model, val_items,
                                      config.eval.nms_threshold,
                                      config.eval.top_k, batch_size)
            report = compute_report(records, [i.sample for i in val_items],
                                    config.eval.metrics, config.data.kind)
            metrics = dict(report.values)
        runlog.records.append({
            "epoch": epoch,
            "losses": losses,
            "wall_time_s": time.perf_counter() - t0,
            "metrics": metrics,
        })

        if epoch % config.run.checkpoint_every == 0 and not is_last:
            _save_train_checkpoint(
                results_dir / f"checkpoint_epoch{epoch:04d}.ckpt",
                model, optimizer, config, epoch, rng)

    final_path = _save_train_checkpoint(results_dir / "checkpoint_final.ckpt",
                                        model, optimizer, config,
                                        config.optim.epochs, rng)
    runlog.save(results_dir / "runlog.json")
    return final_path, runlog


def evaluate_run(config: TrainConfig, checkpoint_path,
                 split: str = "val") -> MetricReport:
    """Evaluate a checkpoint on the config's val split (or train split when
    split='train'); writes predictions and the metric report to results_dir."""
    _set_deterministic()
    ckpt = load_checkpoint(checkpoint_path)
    expected = config.model_section_hash()
    if ckpt.model_hash != expected:
        raise CheckpointError(
            f"checkpoint model hash {ckpt.model_hash} does not match eval "
            f"config model hash {expected}")

    if split == "train":
        ann_path = config.data.train_annotations
    else:
        if config.data.val_annotations is None:
            raise MomentKitError("config has no val_annotations to evaluate")
        ann_path = config.data.val_annotations
    items = load_split(ann_path, config)
    if not items:
        raise MomentKitError(f"split '{split}' is empty")

    model = ckpt.build_model()
    records = predict_records(model, items, config.eval.nms_threshold,
                              config.eval.top_k, config.optim.batch_size)
    report = compute_report(records, [i.sample for i in items],
                            config.eval.metrics, config.data.kind, split=split)

    results_dir = Path(config.run.results_dir)
    results_dir.mkdir(parents=True, exist_ok=True)
    write_predictions(records, results_dir / f"eval_{split}_predictions.jsonl")
    report.write(results_dir / f"eval_{split}_report")
    return report
