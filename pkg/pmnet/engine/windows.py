from __future__ import annotations

from collections.abc import Sequence
from typing import Any, Optional, Union

import numpy as np
import torch
from torch import Tensor
from torch.utils.data import Dataset

from pmnet.core.errors import InputError
from pmnet.models.run import RunConfig
from pmnet.models.synth import PhaseLabel
from pmnet.synthgen.records import SyntheticProcedure

__all__ = ["window_indices", "make_windows", "clip_majority", "window_effect_label", "WindowDataset"]


def window_indices(t: int, window: int = 20, stride: int = 8) -> np.ndarray:
    """Frame indices feeding the prediction for frame ``t``, oldest first.

    ``t - (window-1)*stride, ..., t - stride, t``, clamped at 0 so early frames repeat
    frame 0. Never includes an index above ``t``.

    """
    return np.maximum(t - stride * np.arange(window - 1, -1, -1, dtype=np.int64), 0)


def make_windows(procedure: Union[SyntheticProcedure, int], window: int = 20, stride: int = 8, targets: Optional[Sequence[int]] = None) -> np.ndarray:
    """One window of indices per target frame, ``(len(targets), window)``; all frames by default."""
    n_frames = procedure if isinstance(procedure, int) else len(procedure)
    if n_frames < 1:
        msg = "cannot build windows for a procedure without frames"
        raise InputError(msg)
    targets = np.arange(n_frames) if targets is None else np.asarray(targets, dtype=np.int64)
    if targets.size and (targets.min() < 0 or targets.max() >= n_frames):
        msg = f"target frames must lie in [0, {n_frames})"
        raise InputError(msg)
    offsets = stride * np.arange(window - 1, -1, -1, dtype=np.int64)
    return np.maximum(targets[:, None] - offsets[None, :], 0)


def clip_majority(labels: Tensor, clip_width: int) -> Tensor:
    """Most frequent label per clip over the real frames of ``(..., N)`` labels."""
    n = labels.shape[-1]
    out = []
    for start in range(0, n, clip_width):
        out.append(torch.mode(labels[..., start : start + clip_width], dim=-1).values)
    return torch.stack(out, dim=-1)


def window_effect_label(phases: np.ndarray, effective: np.ndarray) -> tuple[int, bool]:
    """Majority effectiveness flag over the window's Knotting frames, and whether there were any."""
    knot = phases == PhaseLabel.KNOTTING
    if not knot.any():
        return 0, False
    flags = effective[knot]
    return int(flags.sum() * 2 >= flags.size), True


class WindowDataset(Dataset):
    """Every (procedure, frame) pair as a causal training window.

    Augmentation randomness depends only on (seed, epoch, sample index), so results do
    not depend on the number of loader workers.

    """

    def __init__(self, procedures: Sequence[SyntheticProcedure], config: RunConfig, *, augment: bool = True) -> None:
        self.procedures = list(procedures)
        self.config = config
        self.augment = augment
        self.epoch = 0
        self.index = np.array([(p, t) for p, proc in enumerate(self.procedures) for t in range(len(proc))], dtype=np.int64).reshape(-1, 2)

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self) -> int:
        return int(self.index.shape[0])

    def window(self, i: int) -> dict[str, Any]:
        p, t = (int(v) for v in self.index[i])
        proc = self.procedures[p]
        idx = window_indices(t, self.config.window, self.config.frame_stride)
        images = np.array(proc.images[idx], dtype=np.float32)
        boxes = np.array(proc.boxes[idx], dtype=np.int64)
        phases = np.asarray(proc.phases[idx], dtype=np.int64)
        effect, has_effect = window_effect_label(phases, np.asarray(proc.effective[idx]))
        return {"images": images, "boxes": boxes, "phases": phases, "effect": effect, "has_effect": has_effect}

    def _augment(self, sample: dict[str, Any], i: int) -> dict[str, Any]:
        cfg = self.config
        rng = np.random.default_rng([cfg.seed, self.epoch, i])
        images, boxes = sample["images"], sample["boxes"]
        if cfg.horizontal_flip and rng.random() < 0.5:
            width = images.shape[-2]
            images = np.ascontiguousarray(images[:, :, ::-1, :])
            boxes = boxes.copy()
            boxes[:, 0] = width - boxes[:, 0] - boxes[:, 2]
        if cfg.color_jitter and cfg.jitter_strength > 0:
            scale = rng.uniform(1.0 - cfg.jitter_strength, 1.0 + cfg.jitter_strength)
            images = np.clip(images * scale, 0.0, 1.0).astype(np.float32)
        return {**sample, "images": images, "boxes": boxes}

    def __getitem__(self, i: int) -> dict[str, Any]:
        sample = self.window(i)
        if self.augment:
            sample = self._augment(sample, i)
        return {
            "images": torch.from_numpy(sample["images"]),
            "boxes": torch.from_numpy(sample["boxes"]),
            "phases": torch.from_numpy(sample["phases"]),
            "effect": torch.tensor(sample["effect"], dtype=torch.long),
            "has_effect": torch.tensor(sample["has_effect"], dtype=torch.bool),
        }
