from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, confloat, conint, root_validator, validator

from .synth import PhaseLabel


class RunConfig(BaseModel):
    seed: int = 7
    epochs: conint(gt=0) = 50
    batch_size: conint(gt=0) = 16
    steps_per_epoch: conint(gt=0) = 200
    learning_rate: confloat(gt=0.0) = 3e-5
    weight_decay: confloat(ge=0.0) = 0.01

    # temporal sampling: N frames, R frames apart, clips of w frames
    window: conint(ge=2) = 20
    frame_stride: conint(gt=0) = 8
    clip_width: conint(gt=0) = 4

    channels: conint(gt=0) = 96
    region_patch: conint(ge=4) = 32
    n_tokens: conint(ge=0) = 2
    n_swaps: conint(ge=0) = 4
    n_heads: conint(gt=0) = 4
    n_blocks: conint(gt=0) = 2
    state_dim: conint(gt=0) = 16
    scan_chunk: conint(gt=0) = 64

    lambda_cl: confloat(ge=0.0) = 0.1
    alpha: confloat(ge=0.0, le=1.0) = 0.99
    contrastive_pair: str = ""

    masking: bool = True
    use_pooling: bool = True
    use_ssm: bool = True
    use_region: bool = True
    region_in_all_blocks: bool = True
    share_region_encoder: bool = False

    color_jitter: bool = True
    jitter_strength: confloat(ge=0.0, lt=1.0) = 0.1
    horizontal_flip: bool = True

    precision: Literal["float32", "float64"] = "float32"
    num_workers: conint(ge=0) = 0
    device: str = "cpu"
    val_every: conint(gt=0) = 1

    class Config:
        extra = "forbid"
        allow_mutation = False

    @validator("contrastive_pair")
    def _check_pair(cls, value: str) -> str:
        value = value.strip()
        if value:
            parts = [p for p in value.replace(",", "-").split("-") if p.strip()]
            if len(parts) != 2:
                msg = "contrastive_pair must look like 'Knotting-Releasing'"
                raise ValueError(msg)
            first, second = (PhaseLabel.parse(p) for p in parts)
            if first == second:
                msg = f"contrastive_pair must name two different phases (got {first.display_name} twice)"
                raise ValueError(msg)
        return value

    @root_validator(skip_on_failure=True)
    def _check_shapes(cls, values: dict) -> dict:
        if values["clip_width"] > values["window"]:
            msg = f"clip_width ({values['clip_width']}) must not exceed window ({values['window']})"
            raise ValueError(msg)
        if values["channels"] % values["n_heads"]:
            msg = f"channels ({values['channels']}) must be divisible by n_heads ({values['n_heads']})"
            raise ValueError(msg)
        return values

    @property
    def contrastive_phases(self) -> Optional[frozenset[int]]:
        """The unordered phase pair CPS is restricted to, or None for every pair."""
        if not self.contrastive_pair:
            return None
        parts = [p for p in self.contrastive_pair.replace(",", "-").split("-") if p.strip()]
        return frozenset(int(PhaseLabel.parse(p)) for p in parts)

    @property
    def window_span(self) -> int:
        """Frames between the oldest and newest frame of a full window."""
        return (self.window - 1) * self.frame_stride
