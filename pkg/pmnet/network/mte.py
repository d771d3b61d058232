from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import TYPE_CHECKING, Optional

import torch
import torch.nn.functional as F
from loguru import logger as log
from torch import Tensor, nn

from pmnet.core.errors import ConfigError, InternalError
from pmnet.models.synth import BLOCKING_PHASES

if TYPE_CHECKING:
    from .prototypes import PrototypeBank

__all__ = [
    "ClipState",
    "SwapStep",
    "SwapSchedule",
    "MaskStats",
    "ClipAttention",
    "MaskedTemporalEncoder",
    "partition_clips",
    "build_swap_schedule",
    "full_coverage_swap_count",
    "apply_swap",
    "compute_relevance",
    "mask_tokens",
    "pool_clip",
]


@dataclass
class ClipState:
    """One clip of ``w`` frames with its message tokens.

    Tensors carry arbitrary leading batch dimensions: ``features`` is ``(..., w, c)``,
    ``tokens`` is ``(..., d, c)`` and ``token_mask`` is ``(..., d)``. ``padding`` flags
    frames that only repeat the last real frame.

    """

    features: Tensor
    tokens: Tensor
    token_mask: Tensor
    clip_index: int
    padding: Tensor

    @property
    def width(self) -> int:
        return int(self.features.shape[-2])

    @property
    def n_tokens(self) -> int:
        return int(self.tokens.shape[-2])


def partition_clips(features: Tensor, w: int, tokens: Tensor) -> list[ClipState]:
    """Split ``(..., N, c)`` features into non-overlapping clips of ``w`` frames.

    The sequence is padded by repeating its last frame up to a multiple of ``w``.
    Every clip receives its own copy of ``tokens`` (``(d, c)``) with an all-true mask.

    Raises
    ------
    ConfigError
        If ``w`` is not in ``[1, N]``.

    """
    n = features.shape[-2]
    if w < 1 or w > n:
        msg = f"clip width {w} must be between 1 and the window length {n}"
        raise ConfigError(msg)
    pad = (-n) % w
    if pad:
        tail = features[..., -1:, :].expand(*features.shape[:-2], pad, features.shape[-1])
        features = torch.cat([features, tail], dim=-2)
    lead = tuple(features.shape[:-2])
    d, c = tokens.shape
    positions = torch.arange(n + pad, device=features.device)
    clips = []
    for k in range((n + pad) // w):
        sl = slice(k * w, (k + 1) * w)
        clips.append(
            ClipState(
                features=features[..., sl, :],
                tokens=tokens.expand(*lead, d, c),
                token_mask=torch.ones(*lead, d, dtype=torch.bool, device=features.device),
                clip_index=k,
                padding=positions[sl] >= n,
            ),
        )
    return clips


def pool_clip(clip: ClipState) -> Tensor:
    """Temporal mean over the clip's real (non-padding) frames."""
    keep = ~clip.padding
    return clip.features[..., keep, :].mean(dim=-2)


@dataclass(frozen=True)
class SwapStep:
    offset: int
    n_clips: int

    @cached_property
    def pairs(self) -> tuple[tuple[int, int], ...]:
        # greedy left-to-right over k, partner k - offset taken cyclically
        taken: set[int] = set()
        pairs = []
        for k in range(self.n_clips):
            j = (k - self.offset) % self.n_clips
            if j == k or k in taken or j in taken:
                continue
            taken.update((k, j))
            pairs.append((j, k))
        return tuple(pairs)

    @cached_property
    def permutation(self) -> tuple[int, ...]:
        """``permutation[k]`` is the clip whose tokens end up at clip ``k``."""
        perm = list(range(self.n_clips))
        for a, b in self.pairs:
            perm[a], perm[b] = b, a
        return tuple(perm)


@dataclass(frozen=True)
class SwapSchedule:
    steps: tuple[SwapStep, ...]
    n_clips: int

    def __len__(self) -> int:
        return len(self.steps)

    def composed(self) -> tuple[int, ...]:
        """Source clip of the tokens held by each clip after every step ran."""
        owner = list(range(self.n_clips))
        for step in self.steps:
            owner = [owner[step.permutation[k]] for k in range(self.n_clips)]
        return tuple(owner)


def build_swap_schedule(n_clips: int, n_swaps: int) -> SwapSchedule:
    if n_clips < 1 or n_swaps < 0:
        msg = f"need n_clips >= 1 and n_swaps >= 0 (got {n_clips}, {n_swaps})"
        raise ConfigError(msg)
    return SwapSchedule(steps=tuple(SwapStep(i, n_clips) for i in range(1, n_swaps + 1)), n_clips=n_clips)


def full_coverage_swap_count(n_frames: int) -> int:
    """Swaps needed for tokens to reach every clip of an ``n_frames`` window."""
    return math.ceil((math.sqrt(8 * n_frames - 7) - 1) / 2)


def apply_swap(clips: list[ClipState], step: SwapStep) -> list[ClipState]:
    if step.n_clips != len(clips):
        msg = f"swap step built for {step.n_clips} clips applied to {len(clips)}"
        raise InternalError(msg)
    return [replace(clip, tokens=clips[src].tokens, token_mask=clips[src].token_mask) for clip, src in zip(clips, step.permutation)]


def compute_relevance(pooled: Tensor, prototypes: Tensor, initialized: Tensor) -> Tensor:
    """Cosine similarity of ``(..., c)`` pooled clip features to each prototype.

    Pairs involving a zero-norm vector get 0; uninitialized prototypes get ``-inf``
    so they can never win an argmax.

    """
    f_norm = torch.linalg.vector_norm(pooled, dim=-1, keepdim=True)
    p_norm = torch.linalg.vector_norm(prototypes, dim=-1)
    denom = f_norm * p_norm
    valid = denom > 0
    dots = pooled @ prototypes.transpose(-1, -2)
    relevance = torch.where(valid, dots / torch.where(valid, denom, torch.ones_like(denom)), torch.zeros_like(dots))
    n_zero = int((~valid[..., initialized]).sum())
    if n_zero:
        log.debug("{} zero-norm feature/prototype pairs given relevance 0", n_zero)
    return relevance.masked_fill(~initialized, float("-inf"))


@dataclass
class MaskStats:
    n_clips: int = 0
    n_masked: int = 0
    n_masked_blocking: int = 0

    def merge(self, other: MaskStats) -> MaskStats:
        return MaskStats(self.n_clips + other.n_clips, self.n_masked + other.n_masked, self.n_masked_blocking + other.n_masked_blocking)

    @property
    def masked_fraction(self) -> float:
        return self.n_masked / self.n_clips if self.n_clips else 0.0

    @property
    def blocking_masked_fraction(self) -> float:
        return self.n_masked_blocking / self.n_masked if self.n_masked else 0.0


def mask_tokens(clips: list[ClipState], bank: PrototypeBank, clip_labels: Optional[Tensor] = None) -> tuple[list[ClipState], MaskStats]:
    """Mask the tokens of clips whose closest prototype is not a blocking phase.

    No-op until every prototype has been initialized.

    """
    stats = MaskStats()
    if not bank.ready:
        return clips, stats
    blocking = torch.tensor(sorted(int(p) for p in BLOCKING_PHASES), device=bank.prototypes.device)
    out = []
    for k, clip in enumerate(clips):
        pooled = pool_clip(clip)
        relevance = compute_relevance(pooled, bank.prototypes.to(pooled.dtype), bank.initialized)
        keep = torch.isin(relevance.argmax(dim=-1), blocking)
        out.append(replace(clip, token_mask=clip.token_mask & keep[..., None]))
        stats.n_clips += int(keep.numel())
        stats.n_masked += int((~keep).sum())
        if clip_labels is not None:
            stats.n_masked_blocking += int((~keep & torch.isin(clip_labels[..., k], blocking)).sum())
    return out, stats


class ClipAttention(nn.Module):
    """Self-attention over a clip's frames and message tokens, post-norm with a feed-forward.

    Masked tokens are dropped as keys and values, but still attend as queries.

    """

    def __init__(self, channels: int, n_heads: int = 4, hidden: Optional[int] = None) -> None:
        super().__init__()
        if channels % n_heads:
            msg = f"channels ({channels}) must be divisible by n_heads ({n_heads})"
            raise ConfigError(msg)
        self.n_heads = n_heads
        self.head_dim = channels // n_heads
        self.q_proj = nn.Linear(channels, channels)
        self.k_proj = nn.Linear(channels, channels)
        self.v_proj = nn.Linear(channels, channels)
        self.out_proj = nn.Linear(channels, channels)
        self.norm1 = nn.LayerNorm(channels)
        self.ffn = nn.Sequential(nn.Linear(channels, hidden or 4 * channels), nn.SiLU(), nn.Linear(hidden or 4 * channels, channels))
        self.norm2 = nn.LayerNorm(channels)

    def _split_heads(self, x: Tensor) -> Tensor:
        return x.reshape(*x.shape[:-1], self.n_heads, self.head_dim).transpose(-3, -2)

    def forward(self, features: Tensor, tokens: Tensor, token_mask: Tensor, *, return_weights: bool = False) -> tuple[Tensor, Tensor, Optional[Tensor]]:
        w = features.shape[-2]
        x = torch.cat([features, tokens], dim=-2)
        frame_keys = torch.ones(*token_mask.shape[:-1], w, dtype=torch.bool, device=token_mask.device)
        key_mask = torch.cat([frame_keys, token_mask], dim=-1)

        q, k, v = (self._split_heads(proj(x)) for proj in (self.q_proj, self.k_proj, self.v_proj))
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        scores = scores.masked_fill(~key_mask[..., None, None, :], float("-inf"))
        weights = F.softmax(scores, dim=-1)
        attended = (weights @ v).transpose(-3, -2).reshape(x.shape)

        x = self.norm1(x + self.out_proj(attended))
        x = self.norm2(x + self.ffn(x))
        return x[..., :w, :], x[..., w:, :], weights if return_weights else None


class MaskedTemporalEncoder(nn.Module):
    """Short-term encoding of one window: clip attention, token swaps, prototype masking."""

    def __init__(self, channels: int, *, clip_width: int, n_tokens: int, n_swaps: int, n_heads: int = 4, masking: bool = True) -> None:
        super().__init__()
        self.clip_width = clip_width
        self.n_swaps = n_swaps
        self.masking = masking
        self.token_init = nn.Parameter(torch.randn(n_tokens, channels) * 0.02)
        self.token_proj = nn.Linear(channels, channels)
        self.position = nn.Parameter(torch.zeros(clip_width, channels))
        self.layers = nn.ModuleList(ClipAttention(channels, n_heads) for _ in range(n_swaps + 1))
        self.last_mask_stats = MaskStats()
        # attention layer calls in the last forward; each call covers every clip
        self.attention_passes = 0

    def partition(self, features: Tensor) -> list[ClipState]:
        clips = partition_clips(features, self.clip_width, self.token_proj(self.token_init))
        return [replace(clip, features=clip.features + self.position) for clip in clips]

    def attend(self, layer: ClipAttention, clips: list[ClipState]) -> list[ClipState]:
        # all clips go through the layer as one stacked batch
        feats = torch.stack([c.features for c in clips], dim=-3)
        toks = torch.stack([c.tokens for c in clips], dim=-3)
        masks = torch.stack([c.token_mask for c in clips], dim=-2)
        new_feats, new_toks, _ = layer(feats, toks, masks)
        self.attention_passes += 1
        return [replace(c, features=new_feats[..., k, :, :], tokens=new_toks[..., k, :, :]) for k, c in enumerate(clips)]

    def forward(self, features: Tensor, bank: Optional[PrototypeBank] = None, clip_labels: Optional[Tensor] = None) -> list[ClipState]:
        """Encode ``(..., N, c)`` features into clip features ``f'_k``.

        Attention and swap steps alternate; masking runs right before the final
        attention pass when enabled and the bank is initialized.

        """
        self.attention_passes = 0
        clips = self.partition(features)
        schedule = build_swap_schedule(len(clips), self.n_swaps)
        for layer, step in zip(self.layers[:-1], schedule.steps):
            clips = self.attend(layer, clips)
            clips = apply_swap(clips, step)
        if self.masking and bank is not None:
            clips, stats = mask_tokens(clips, bank, clip_labels)
            self.last_mask_stats = stats
        clips = self.attend(self.layers[-1], clips)
        return clips
