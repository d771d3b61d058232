from __future__ import annotations

from .csm import CompressedSequenceModel, CSMBlock, EffectivenessHead, LongMemory, PhaseHead, overlap_pool, retrieve
from .encoder import FrameEncoder, RegionEncoder, crop_regions, encode_frames, encode_region
from .model import DTYPES, ModelOutput, PmNet
from .mte import (
    ClipAttention,
    ClipState,
    MaskedTemporalEncoder,
    MaskStats,
    SwapSchedule,
    SwapStep,
    apply_swap,
    build_swap_schedule,
    compute_relevance,
    full_coverage_swap_count,
    mask_tokens,
    partition_clips,
)
from .objectives import LossReport, contrastive_loss, contrastive_term, cross_entropy, euclid, total_loss
from .prototypes import PrototypeBank
from .scan import SelectiveScan, selective_scan_chunked, selective_scan_seq

__all__ = [
    "CSMBlock",
    "ClipAttention",
    "ClipState",
    "CompressedSequenceModel",
    "DTYPES",
    "EffectivenessHead",
    "FrameEncoder",
    "LongMemory",
    "LossReport",
    "MaskStats",
    "MaskedTemporalEncoder",
    "ModelOutput",
    "PhaseHead",
    "PmNet",
    "PrototypeBank",
    "RegionEncoder",
    "SelectiveScan",
    "SwapSchedule",
    "SwapStep",
    "apply_swap",
    "build_swap_schedule",
    "compute_relevance",
    "contrastive_loss",
    "contrastive_term",
    "crop_regions",
    "cross_entropy",
    "encode_frames",
    "encode_region",
    "euclid",
    "full_coverage_swap_count",
    "mask_tokens",
    "overlap_pool",
    "partition_clips",
    "retrieve",
    "selective_scan_chunked",
    "selective_scan_seq",
    "total_loss",
]
