from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import torch
import torch.nn.functional as F
from loguru import logger as log
from torch import Tensor, nn

from pmnet.core.errors import InputError

from .scan import SelectiveScan

__all__ = ["LongMemory", "overlap_pool", "CSMBlock", "CompressedSequenceModel", "retrieve", "EffectivenessHead", "PhaseHead"]


@dataclass
class LongMemory:
    """Compressed window memory ``(..., M, c)`` and the scan states that produced it."""

    values: Tensor
    states: list[Tensor] = field(default_factory=list)

    @property
    def scan_state(self) -> Optional[Tensor]:
        return self.states[-1] if self.states else None

    def __len__(self) -> int:
        return int(self.values.shape[-2])


def overlap_pool(x: Tensor, w: int, *, enabled: bool = True) -> Tensor:
    """Mean-pool ``(..., N, c)`` over time with window ``2w`` and stride ``w``.

    Gives ``N // w - 1`` rows when ``N`` is a multiple of ``w``; shorter sequences than
    one window are averaged into a single row.

    """
    n = x.shape[-2]
    if n < 2:
        msg = f"overlap pooling needs at least 2 frames (got {n})"
        raise InputError(msg)
    if not enabled:
        return x
    if n < 2 * w:
        return x.mean(dim=-2, keepdim=True)
    lead = x.shape[:-2]
    planar = x.reshape(-1, n, x.shape[-1]).transpose(1, 2)
    pooled = F.avg_pool1d(planar, kernel_size=2 * w, stride=w)
    return pooled.transpose(1, 2).reshape(*lead, pooled.shape[-1], x.shape[-1])


class CSMBlock(nn.Module):
    """Gated two-branch scan: ``F_c + out(silu(gate(F_c)) * (S(main(F_c)) + S'(region(F_r))))``."""

    def __init__(self, channels: int, state_dim: int = 16, *, chunk: int = 64) -> None:
        super().__init__()
        self.norm = nn.LayerNorm(channels)
        self.region_norm = nn.LayerNorm(channels)
        self.gate_proj = nn.Linear(channels, channels)
        self.main_proj = nn.Linear(channels, channels)
        self.region_proj = nn.Linear(channels, channels)
        self.main_scan = SelectiveScan(channels, state_dim, chunk=chunk)
        self.region_scan = SelectiveScan(channels, state_dim, chunk=chunk)
        self.out_proj = nn.Linear(channels, channels)

    def forward(self, fc: Tensor, fr: Optional[Tensor] = None, *, sequential: bool = False) -> tuple[Tensor, Tensor]:
        if fr is not None and fr.shape != fc.shape:
            msg = f"region branch shape {tuple(fr.shape)} does not match main branch {tuple(fc.shape)}"
            raise InputError(msg)
        x = self.norm(fc)
        gate = F.silu(self.gate_proj(x))
        y, state = self.main_scan(self.main_proj(x), sequential=sequential)
        if fr is not None:
            y_region, _ = self.region_scan(self.region_proj(self.region_norm(fr)), sequential=sequential)
            y = y + y_region
        return fc + self.out_proj(gate * y), state


class CompressedSequenceModel(nn.Module):
    def __init__(
        self,
        channels: int,
        *,
        clip_width: int,
        n_blocks: int = 2,
        state_dim: int = 16,
        chunk: int = 64,
        use_pooling: bool = True,
        use_ssm: bool = True,
        use_region: bool = True,
        region_in_all_blocks: bool = True,
    ) -> None:
        super().__init__()
        self.clip_width = clip_width
        self.use_pooling = use_pooling
        self.use_ssm = use_ssm
        self.use_region = use_region
        self.region_in_all_blocks = region_in_all_blocks
        self.blocks = nn.ModuleList(CSMBlock(channels, state_dim, chunk=chunk) for _ in range(n_blocks)) if use_ssm else nn.ModuleList()

    def forward(self, f_prime: Tensor, f_region: Optional[Tensor] = None) -> LongMemory:
        fc = overlap_pool(f_prime, self.clip_width, enabled=self.use_pooling)
        fr = overlap_pool(f_region, self.clip_width, enabled=self.use_pooling) if f_region is not None and self.use_region else None
        states = []
        for i, block in enumerate(self.blocks):
            inject = fr if (self.region_in_all_blocks or i == 0) else None
            fc, state = block(fc, inject)
            states.append(state)
        return LongMemory(values=fc, states=states)


def retrieve(query: Tensor, memory: Tensor, *, return_weights: bool = False) -> tuple[Tensor, Optional[Tensor]]:
    """Cosine-attention read of ``(..., M, c)`` memory by ``(..., L, c)`` queries, with residual.

    Zero-norm query rows attend uniformly; zero-norm memory rows score 0.

    """
    if memory.shape[-2] == 0:
        msg = "retrieval from an empty memory"
        raise InputError(msg)
    q_norm = torch.linalg.vector_norm(query, dim=-1, keepdim=True)
    m_norm = torch.linalg.vector_norm(memory, dim=-1)[..., None, :]
    denom = q_norm * m_norm
    valid = denom > 0
    dots = query @ memory.transpose(-2, -1)
    logits = torch.where(valid, dots / torch.where(valid, denom, torch.ones_like(denom)), torch.zeros_like(dots))
    zero_rows = int((q_norm == 0).sum())
    if zero_rows:
        log.debug("{} zero-norm retrieval queries fall back to uniform attention", zero_rows)
    weights = F.softmax(logits, dim=-1)
    out = weights @ memory + query
    return out, weights if return_weights else None


class EffectivenessHead(nn.Module):
    """Window-level logits over (ineffective, effective) from the mean memory row."""

    def __init__(self, channels: int) -> None:
        super().__init__()
        self.mlp = nn.Sequential(nn.Linear(channels, 2 * channels), nn.SiLU(), nn.Linear(2 * channels, 2))

    def forward(self, memory: Tensor) -> Tensor:
        return self.mlp(memory.mean(dim=-2))


class PhaseHead(nn.Module):
    def __init__(self, channels: int, n_phases: int = 5) -> None:
        super().__init__()
        self.mlp = nn.Sequential(nn.Linear(channels, 2 * channels), nn.SiLU(), nn.Linear(2 * channels, n_phases))

    def forward(self, rows: Tensor) -> Tensor:
        return self.mlp(rows)
