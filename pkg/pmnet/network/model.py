from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
from torch import Tensor, nn

from pmnet.models.run import RunConfig
from pmnet.models.synth import N_PHASES

from .csm import CompressedSequenceModel, EffectivenessHead, LongMemory, PhaseHead, retrieve
from .encoder import FrameEncoder, RegionEncoder
from .mte import ClipState, MaskedTemporalEncoder
from .prototypes import PrototypeBank

__all__ = ["ModelOutput", "PmNet", "DTYPES"]

DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass
class ModelOutput:
    phase_logits: Tensor
    effect_logits: Tensor
    clip_pooled: Tensor
    clip_logits: Tensor
    padding: Tensor
    memory: LongMemory

    @property
    def frame_mask(self) -> Tensor:
        return ~self.padding


class PmNet(nn.Module):
    """Window-level recognizer: frame and region encoders, masked temporal encoding,
    compressed sequence memory with retrieval, and the phase and effectiveness heads.
    """

    def __init__(self, config: RunConfig) -> None:
        super().__init__()
        self.config = config
        c = config.channels
        self.frame_encoder = FrameEncoder(c)
        self.region_encoder = RegionEncoder(c, config.region_patch, backbone=self.frame_encoder if config.share_region_encoder else None)
        self.mte = MaskedTemporalEncoder(
            c,
            clip_width=config.clip_width,
            n_tokens=config.n_tokens,
            n_swaps=config.n_swaps,
            n_heads=config.n_heads,
            masking=config.masking,
        )
        self.csm = CompressedSequenceModel(
            c,
            clip_width=config.clip_width,
            n_blocks=config.n_blocks,
            state_dim=config.state_dim,
            chunk=config.scan_chunk,
            use_pooling=config.use_pooling,
            use_ssm=config.use_ssm,
            use_region=config.use_region,
            region_in_all_blocks=config.region_in_all_blocks,
        )
        self.phase_head = PhaseHead(c, N_PHASES)
        self.effect_head = EffectivenessHead(c)
        self.bank = PrototypeBank(c, alpha=config.alpha)

    @classmethod
    def from_config(cls, config: RunConfig) -> PmNet:
        return cls(config).to(DTYPES[config.precision])

    @property
    def dtype(self) -> torch.dtype:
        return self.bank.prototypes.dtype

    @property
    def n_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def encode(self, images: Tensor, boxes: Optional[Tensor]) -> tuple[Tensor, Optional[Tensor]]:
        """``(..., H, W, 3)`` frames to frame features and, when used, region features."""
        features = self.frame_encoder(images)
        if not self.config.use_region or boxes is None:
            return features, None
        return features, self.region_encoder(images, boxes)

    def short_term(self, features: Tensor, clip_labels: Optional[Tensor] = None) -> list[ClipState]:
        return self.mte(features, self.bank, clip_labels)

    def long_term(self, clips: list[ClipState], regions: Optional[Tensor]) -> LongMemory:
        f_prime = torch.cat([c.features for c in clips], dim=-2)
        if regions is not None:
            pad = f_prime.shape[-2] - regions.shape[-2]
            if pad:
                tail = regions[..., -1:, :].expand(*regions.shape[:-2], pad, regions.shape[-1])
                regions = torch.cat([regions, tail], dim=-2)
        return self.csm(f_prime, regions)

    def readout(self, clips: list[ClipState], memory: LongMemory) -> ModelOutput:
        rows, pooled, clip_logits = [], [], []
        for clip in clips:
            f_pp, _ = retrieve(clip.features, memory.values)
            logits = self.phase_head(f_pp)
            keep = ~clip.padding
            rows.append(logits)
            pooled.append(f_pp[..., keep, :].mean(dim=-2))
            clip_logits.append(logits[..., keep, :].mean(dim=-2))
        return ModelOutput(
            phase_logits=torch.cat(rows, dim=-2),
            effect_logits=self.effect_head(memory.values),
            clip_pooled=torch.stack(pooled, dim=-2),
            clip_logits=torch.stack(clip_logits, dim=-2),
            padding=torch.cat([c.padding for c in clips]),
            memory=memory,
        )

    def temporal(self, features: Tensor, regions: Optional[Tensor] = None, clip_labels: Optional[Tensor] = None) -> ModelOutput:
        clips = self.short_term(features, clip_labels)
        return self.readout(clips, self.long_term(clips, regions))

    def forward(self, images: Tensor, boxes: Optional[Tensor] = None, clip_labels: Optional[Tensor] = None) -> ModelOutput:
        """Run a batch of windows ``(B, N, H, W, 3)`` with boxes ``(B, N, 4)``."""
        features, regions = self.encode(images, boxes)
        return self.temporal(features, regions, clip_labels)
