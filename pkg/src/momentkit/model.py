"""Span-prediction network: transformer encoder over concatenated video+text
features, query-slot decoder emitting (center, width) spans with foreground
logits, and a per-clip saliency head.

Variant mechanisms are composable flags on one model class: negative-pair
saliency contrast (neg_pair), learned dummy key/value tokens in decoder
cross-attention (dummy_tokens), and content-conditioned slot initialization
(content_slots).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .data import MomentSpan
from .errors import ShapeError, ValidationError
from .features import FeaturePair


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int = 256
    num_slots: int = 10
    enc_layers: int = 2
    dec_layers: int = 2
    heads: int = 8
    dropout: float = 0.1
    w_l1: float = 10.0
    w_giou: float = 1.0
    w_cls: float = 4.0
    w_sal: float = 1.0
    sal_margin: float = 0.2
    neg_pair: bool = False
    dummy_tokens: int = 0
    content_slots: bool = False
    use_position_encoding: bool = True

    def __post_init__(self):
        if self.num_slots < 1:
            raise ValidationError("num_slots must be >= 1", field="num_slots")
        if self.hidden_dim % self.heads != 0:
            raise ValidationError("hidden_dim must be divisible by heads",
                                  field="hidden_dim")
        for name in ("w_l1", "w_giou", "w_cls", "w_sal"):
            if getattr(self, name) < 0:
                raise ValidationError("loss weights must be >= 0", field=name)
        if self.dummy_tokens < 0:
            raise ValidationError("dummy_tokens must be >= 0", field="dummy_tokens")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError("dropout must be in [0, 1)", field="dropout")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass(frozen=True)
class SpanPrediction:
    """K (center, width) pairs normalized to [0, 1] plus foreground logits."""

    spans: np.ndarray
    confidence_logits: np.ndarray

    def __post_init__(self):
        if self.spans.ndim != 2 or self.spans.shape[1] != 2:
            raise ShapeError(f"spans must be K x 2, got {self.spans.shape}")
        if self.confidence_logits.shape != (self.spans.shape[0],):
            raise ShapeError("confidence_logits must have one entry per slot")
        centers, widths = self.spans[:, 0], self.spans[:, 1]
        if not (np.all(centers >= 0) and np.all(centers <= 1)):
            raise ValidationError("centers must lie in [0, 1]", field="spans")
        if not (np.all(widths > 0) and np.all(widths <= 1)):
            raise ValidationError("widths must lie in (0, 1]", field="spans")


@dataclass(frozen=True)
class SaliencyScores:
    """One unbounded score per clip; higher means more salient."""

    scores: np.ndarray

    def __post_init__(self):
        if self.scores.ndim != 1:
            raise ShapeError("saliency scores must be 1-D")
        if not np.isfinite(self.scores).all():
            raise ValidationError("saliency scores must be finite", field="saliency")


def span_cxw_to_interval(center: float, width: float,
                         duration_s: float) -> MomentSpan:
    """Map a normalized (center, width) pair to clamped absolute seconds."""
    start = min(max(center - width / 2.0, 0.0), 1.0) * duration_s
    end = min(max(center + width / 2.0, 0.0), 1.0) * duration_s
    if end <= start:  # guard degenerate float collapse of very narrow spans
        end = start + 1e-9 * max(duration_s, 1.0)
    return MomentSpan(start, end)


def sinusoidal_positions(length: int, dim: int, *, device=None,
                         dtype=None) -> torch.Tensor:
    position = torch.arange(length, device=device, dtype=dtype).unsqueeze(1)
    half = torch.arange(0, dim, 2, device=device, dtype=dtype)
    angles = position * torch.exp(half * (-math.log(10000.0) / dim))
    pe = torch.zeros(length, dim, device=device, dtype=dtype)
    pe[:, 0::2] = torch.sin(angles)
    pe[:, 1::2] = torch.cos(angles[:, : dim // 2])
    return pe


class DummyKeyAttention(nn.Module):
    """Multi-head cross-attention with optional learned dummy key/value rows.

    The dummy rows are appended to the memory before projection, so softmax
    normalizes over real plus dummy keys; with num_dummy == 0 the module is
    plain scaled-dot-product cross-attention.
    """

    def __init__(self, hidden_dim: int, heads: int, num_dummy: int,
                 dropout: float = 0.0):
        super().__init__()
        self.heads = heads
        self.head_dim = hidden_dim // heads
        self.num_dummy = num_dummy
        self.q_proj = nn.Linear(hidden_dim, hidden_dim)
        self.k_proj = nn.Linear(hidden_dim, hidden_dim)
        self.v_proj = nn.Linear(hidden_dim, hidden_dim)
        self.out_proj = nn.Linear(hidden_dim, hidden_dim)
        self.dropout = nn.Dropout(dropout)
        if num_dummy > 0:
            self.dummy_tokens = nn.Parameter(torch.zeros(num_dummy, hidden_dim))
            nn.init.normal_(self.dummy_tokens, std=0.02)

    def forward(self, query: torch.Tensor, memory: torch.Tensor,
                key_padding_mask: torch.Tensor | None = None,
                need_weights: bool = False):
        bsz, q_len, dim = query.shape
        if self.num_dummy > 0:
            dummies = self.dummy_tokens.unsqueeze(0).expand(bsz, -1, -1)
            memory = torch.cat([memory, dummies], dim=1)
            if key_padding_mask is not None:
                pad = torch.zeros(bsz, self.num_dummy, dtype=torch.bool,
                                  device=memory.device)
                key_padding_mask = torch.cat([key_padding_mask, pad], dim=1)
        s_len = memory.shape[1]

        def split(x, length):
            return x.view(bsz, length, self.heads, self.head_dim).transpose(1, 2)

        q = split(self.q_proj(query), q_len)
        k = split(self.k_proj(memory), s_len)
        v = split(self.v_proj(memory), s_len)
        logits = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        if key_padding_mask is not None:
            logits = logits.masked_fill(
                key_padding_mask[:, None, None, :], float("-inf"))
        attn = torch.softmax(logits, dim=-1)
        attn = self.dropout(attn)
        out = (attn @ v).transpose(1, 2).reshape(bsz, q_len, dim)
        out = self.out_proj(out)
        if need_weights:
            return out, attn.mean(dim=1)
        return out, None


def dummy_token_cross_attention(module: DummyKeyAttention, query: torch.Tensor,
                                memory: torch.Tensor,
                                key_padding_mask: torch.Tensor | None = None):
    """Apply dummy-token cross-attention, returning (values, attention weights
    over real + dummy keys, head-averaged)."""
    return module(query, memory, key_padding_mask, need_weights=True)


class DecoderLayer(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        h = config.hidden_dim
        self.self_attn = nn.MultiheadAttention(h, config.heads,
                                               dropout=config.dropout,
                                               batch_first=True)
        self.cross_attn = DummyKeyAttention(h, config.heads, config.dummy_tokens,
                                            dropout=config.dropout)
        self.ffn = nn.Sequential(
            nn.Linear(h, 4 * h), nn.GELU(), nn.Dropout(config.dropout),
            nn.Linear(4 * h, h),
        )
        self.norm1 = nn.LayerNorm(h)
        self.norm2 = nn.LayerNorm(h)
        self.norm3 = nn.LayerNorm(h)
        self.drop = nn.Dropout(config.dropout)

    def forward(self, slots, memory, memory_padding_mask):
        attn_out, _ = self.self_attn(slots, slots, slots, need_weights=False)
        slots = self.norm1(slots + self.drop(attn_out))
        cross_out, weights = self.cross_attn(slots, memory, memory_padding_mask,
                                             need_weights=True)
        slots = self.norm2(slots + self.drop(cross_out))
        slots = self.norm3(slots + self.drop(self.ffn(slots)))
        return slots, weights


def attention_span_moments(weights: torch.Tensor, video_mask: torch.Tensor,
                           n_video: int) -> torch.Tensor:
    """Per-slot mean and spread of cross-attention over video positions.

    weights: (B, K, S) head-averaged attention over real+dummy keys. The video
    share is renormalized and reduced against normalized clip centers, giving
    each slot a direct positional summary to regress spans from.
    """
    video_w = weights[:, :, :n_video]
    lengths = video_mask.sum(dim=1).clamp(min=1).to(weights.dtype)
    centers = ((torch.arange(n_video, device=weights.device,
                             dtype=weights.dtype) + 0.5).unsqueeze(0)
               / lengths.unsqueeze(1))
    centers = centers * video_mask.to(weights.dtype)
    mass = video_w.sum(dim=-1).clamp(min=1e-9)
    mu = (video_w * centers.unsqueeze(1)).sum(dim=-1) / mass
    var = (video_w * (centers.unsqueeze(1) - mu.unsqueeze(-1)) ** 2).sum(-1) / mass
    sigma = torch.sqrt(var + 1e-12)
    return torch.stack([mu, sigma], dim=-1)


class MomentHighlightModel(nn.Module):
    """Joint moment-retrieval / highlight-detection network."""

    def __init__(self, config: ModelConfig, dv: int, dt: int):
        super().__init__()
        self.config = config
        self.dv = dv
        self.dt = dt
        h = config.hidden_dim

        self.video_proj = nn.Sequential(nn.Linear(dv, h), nn.LayerNorm(h),
                                        nn.Dropout(config.dropout))
        self.text_proj = nn.Sequential(nn.Linear(dt, h), nn.LayerNorm(h),
                                       nn.Dropout(config.dropout))
        self.modality_embed = nn.Parameter(torch.zeros(2, h))
        nn.init.normal_(self.modality_embed, std=0.02)

        enc_layer = nn.TransformerEncoderLayer(
            d_model=h, nhead=config.heads, dim_feedforward=4 * h,
            dropout=config.dropout, activation="gelu", batch_first=True)
        self.encoder = nn.TransformerEncoder(enc_layer, config.enc_layers,
                                             enable_nested_tensor=False)

        self.slot_embed = nn.Parameter(torch.zeros(config.num_slots, h))
        nn.init.normal_(self.slot_embed, std=0.02)
        self.decoder_layers = nn.ModuleList(
            DecoderLayer(config) for _ in range(config.dec_layers))

        # span head reads the slot state plus the slot's attention position
        # summary (mean, spread) over video clips
        self.span_head = nn.Sequential(nn.Linear(h + 2, h), nn.GELU(),
                                       nn.Linear(h, h), nn.GELU(),
                                       nn.Linear(h, 2))
        self.conf_head = nn.Linear(h, 1)
        self.saliency_head = nn.Linear(h, 1)

    def _check_dims(self, video: torch.Tensor, text: torch.Tensor) -> None:
        if video.shape[-1] != self.dv:
            raise ShapeError(
                f"video features have dim {video.shape[-1]}, model expects {self.dv}")
        if text.shape[-1] != self.dt:
            raise ShapeError(
                f"text features have dim {text.shape[-1]}, model expects {self.dt}")

    def forward(self, video: torch.Tensor, text: torch.Tensor,
                video_mask: torch.Tensor | None = None,
                text_mask: torch.Tensor | None = None) -> dict[str, torch.Tensor]:
        """video: (B, L, Dv), text: (B, T_w, Dt); masks True on real positions.

        Returns spans (B, K, 2) as sigmoid (center, width), logits (B, K) and
        saliency (B, L).
        """
        self._check_dims(video, text)
        bsz, n_video, _ = video.shape
        n_text = text.shape[1]
        dev, dtype = video.device, self.modality_embed.dtype
        if video_mask is None:
            video_mask = torch.ones(bsz, n_video, dtype=torch.bool, device=dev)
        if text_mask is None:
            text_mask = torch.ones(bsz, n_text, dtype=torch.bool, device=dev)

        hv = self.video_proj(video.to(dtype)) + self.modality_embed[0]
        ht = self.text_proj(text.to(dtype)) + self.modality_embed[1]
        if self.config.use_position_encoding:
            h = self.config.hidden_dim
            hv = hv + sinusoidal_positions(n_video, h, device=dev, dtype=dtype)
            ht = ht + sinusoidal_positions(n_text, h, device=dev, dtype=dtype)

        seq = torch.cat([hv, ht], dim=1)
        padding = ~torch.cat([video_mask, text_mask], dim=1)
        memory = self.encoder(seq, src_key_padding_mask=padding)

        enc_video = memory[:, :n_video]
        saliency = self.saliency_head(enc_video).squeeze(-1)

        slots = self.slot_embed.unsqueeze(0).expand(bsz, -1, -1)
        if self.config.content_slots:
            vmask = video_mask.unsqueeze(-1).to(dtype)
            tmask = text_mask.unsqueeze(-1).to(dtype)
            video_mean = (enc_video * vmask).sum(1) / vmask.sum(1).clamp(min=1.0)
            enc_text = memory[:, n_video:]
            text_mean = (enc_text * tmask).sum(1) / tmask.sum(1).clamp(min=1.0)
            slots = slots + (video_mean + text_mean).unsqueeze(1)

        cross_weights = None
        for layer in self.decoder_layers:
            slots, cross_weights = layer(slots, memory, padding)

        pos_summary = attention_span_moments(cross_weights, video_mask, n_video)
        spans = torch.sigmoid(self.span_head(torch.cat([slots, pos_summary],
                                                       dim=-1)))
        logits = self.conf_head(slots).squeeze(-1)
        return {"spans": spans, "logits": logits, "saliency": saliency}

    @torch.no_grad()
    def predict_single(self, features: FeaturePair) -> tuple[SpanPrediction,
                                                             SaliencyScores]:
        """Forward one FeaturePair in eval mode."""
        was_training = self.training
        self.eval()
        try:
            dtype = self.modality_embed.dtype
            video = torch.from_numpy(np.ascontiguousarray(features.video))
            text = torch.from_numpy(np.ascontiguousarray(features.text))
            out = self.forward(video.unsqueeze(0).to(dtype),
                               text.unsqueeze(0).to(dtype))
        finally:
            self.train(was_training)
        spans = out["spans"][0].numpy().astype(np.float64)
        logits = out["logits"][0].numpy().astype(np.float64)
        saliency = out["saliency"][0].numpy().astype(np.float64)
        return (SpanPrediction(spans=spans, confidence_logits=logits),
                SaliencyScores(scores=saliency))
