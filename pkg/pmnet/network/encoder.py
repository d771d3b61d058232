from __future__ import annotations

import math
from collections.abc import Sequence
from typing import Optional, Union

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from pmnet.core.errors import InputError

__all__ = ["ConvStage", "FrameEncoder", "RegionEncoder", "stack_frames", "crop_regions", "encode_frames", "encode_region"]

FRAME_WIDTHS = (16, 32, 64)
REGION_WIDTHS = (48,)


class ConvStage(nn.Sequential):
    """Stride-2 3x3 convolution, group norm, SiLU."""

    def __init__(self, in_channels: int, out_channels: int) -> None:
        super().__init__(
            nn.Conv2d(in_channels, out_channels, kernel_size=3, stride=2, padding=1),
            nn.GroupNorm(math.gcd(8, out_channels), out_channels),
            nn.SiLU(),
        )


def _to_channels_first(images: Tensor) -> tuple[Tensor, tuple[int, ...]]:
    if images.dim() < 3 or images.shape[-1] != 3:
        msg = f"expected (..., H, W, 3) images, got shape {tuple(images.shape)}"
        raise InputError(msg)
    lead = tuple(images.shape[:-3])
    flat = images.reshape(-1, *images.shape[-3:]).permute(0, 3, 1, 2)
    return flat, lead


class FrameEncoder(nn.Module):
    """Four stride-2 stages and a global spatial average, one c-vector per frame."""

    def __init__(self, channels: int, widths: Sequence[int] = FRAME_WIDTHS) -> None:
        super().__init__()
        dims = [3, *widths, channels]
        self.channels = channels
        self.stages = nn.Sequential(*(ConvStage(a, b) for a, b in zip(dims[:-1], dims[1:])))

    def encode_planar(self, x: Tensor) -> Tensor:
        return self.stages(x).mean(dim=(-2, -1))

    def forward(self, images: Tensor) -> Tensor:
        flat, lead = _to_channels_first(images)
        return self.encode_planar(flat).reshape(*lead, self.channels)


def crop_regions(images: Tensor, boxes: Tensor, patch: int) -> Tensor:
    """Crop each frame to its ``(x, y, w, h)`` box and resize to ``patch`` x ``patch``.

    Returns channel-first crops of shape ``(B, 3, patch, patch)`` for flattened frames.

    """
    flat, _ = _to_channels_first(images)
    boxes = boxes.reshape(-1, 4)
    if boxes.shape[0] != flat.shape[0]:
        msg = f"{boxes.shape[0]} boxes for {flat.shape[0]} frames"
        raise InputError(msg)
    height, width = flat.shape[-2:]
    crops = []
    for frame, (x, y, w, h) in zip(flat, boxes.tolist()):
        x, y, w, h = int(x), int(y), int(w), int(h)
        if w < 2 or h < 2:
            msg = f"degenerate box {(x, y, w, h)}: width and height must be at least 2 px"
            raise InputError(msg)
        if x < 0 or y < 0 or x + w > width or y + h > height:
            msg = f"box {(x, y, w, h)} leaves the {width}x{height} frame"
            raise InputError(msg)
        crop = frame[:, y : y + h, x : x + w].unsqueeze(0)
        crops.append(F.interpolate(crop, size=(patch, patch), mode="bilinear", align_corners=False))
    if not crops:
        return flat.new_zeros((0, 3, patch, patch))
    return torch.cat(crops, dim=0)


class RegionEncoder(nn.Module):
    """Encodes the ischemia box of each frame.

    Uses its own lighter two-stage stack unless a ``backbone`` frame encoder is given,
    in which case the resized crops go through that encoder's weights instead.

    """

    def __init__(self, channels: int, patch: int = 32, *, backbone: Optional[FrameEncoder] = None) -> None:
        super().__init__()
        self.channels = channels
        self.patch = patch
        self.backbone = backbone
        if backbone is None:
            dims = [3, *REGION_WIDTHS, channels]
            self.stages = nn.Sequential(*(ConvStage(a, b) for a, b in zip(dims[:-1], dims[1:])))

    def forward(self, images: Tensor, boxes: Tensor) -> Tensor:
        lead = tuple(images.shape[:-3])
        crops = crop_regions(images, boxes, self.patch)
        if self.backbone is not None:
            encoded = self.backbone.encode_planar(crops)
        else:
            encoded = self.stages(crops).mean(dim=(-2, -1))
        return encoded.reshape(*lead, self.channels)


def stack_frames(frames: Sequence[Union[Tensor, np.ndarray]], *, dtype: Optional[torch.dtype] = None) -> Tensor:
    """Stack a list of ``(H, W, 3)`` frames, insisting they all share one shape."""
    if not frames:
        msg = "no frames to encode"
        raise InputError(msg)
    tensors = [torch.as_tensor(np.asarray(f) if not isinstance(f, Tensor) else f) for f in frames]
    first = tuple(tensors[0].shape)
    for i, t in enumerate(tensors):
        if tuple(t.shape) != first:
            msg = f"frame {i} has shape {tuple(t.shape)}, expected {first}"
            raise InputError(msg)
    stacked = torch.stack(tensors)
    return stacked.to(dtype) if dtype is not None else stacked


def encode_frames(encoder: FrameEncoder, frames: Sequence[Union[Tensor, np.ndarray]]) -> Tensor:
    """Frame list to an ``(N, c)`` feature sequence."""
    dtype = next(encoder.parameters()).dtype
    return encoder(stack_frames(frames, dtype=dtype))


def encode_region(encoder: RegionEncoder, frames: Sequence[Union[Tensor, np.ndarray]], boxes: Union[Tensor, np.ndarray]) -> Tensor:
    """Frame list plus per-frame boxes to an ``(N, c)`` region sequence."""
    dtype = next(encoder.parameters()).dtype
    return encoder(stack_frames(frames, dtype=dtype), torch.as_tensor(np.asarray(boxes)).reshape(-1, 4))
