from __future__ import annotations

import math
from enum import IntEnum

from pydantic import BaseModel, confloat, conint

from pmnet.core.errors import ConfigError


class PhaseLabel(IntEnum):
    # using IntEnum, so labels index tensors and survive text round-trips as plain ints
    PREPARING = 0
    KNOTTING = 1
    RESECTING = 2
    RELEASING = 3
    POSTPROCESSING = 4

    @property
    def display_name(self) -> str:
        return self.name.capitalize()

    @classmethod
    def parse(cls, value: str | int) -> PhaseLabel:
        """Accept an id (``1``) or a case-insensitive name (``knotting``)."""
        if isinstance(value, int) or str(value).strip().isdigit():
            return cls(int(value))
        try:
            return cls[str(value).strip().upper()]
        except KeyError:
            msg = f"Unknown phase: {value!r}"
            raise ConfigError(msg) from None


BLOCKING_PHASES = frozenset({PhaseLabel.KNOTTING, PhaseLabel.RELEASING})
N_PHASES = len(PhaseLabel)

DEFAULT_PHASE_FRACTIONS = (0.0966, 0.0938, 0.6661, 0.0586, 0.0849)


class GeneratorParams(BaseModel):
    n_procedures: conint(ge=0) = 50
    frames_min: conint(ge=1) = 313
    frames_max: conint(ge=1) = 726
    frames_mean: conint(ge=1) = 501
    phase_fractions: tuple[float, float, float, float, float] = DEFAULT_PHASE_FRACTIONS
    ineffective_fraction: confloat(ge=0.0, le=1.0) = 0.10
    high_rate_fps: confloat(gt=0.0) = 3.0
    low_rate_fps: confloat(gt=0.0) = 0.33
    image_size: conint(ge=8) = 64
    seed: conint(ge=0) = 7
    # Dirichlet concentration is concentration * phase_fractions
    concentration: confloat(gt=0.0) = 50.0
    min_blocking_frames: conint(ge=0) = 30
    # ischemia darkening time constant, seconds after Knotting starts
    darkening_tau: confloat(gt=0.0) = 10.0

    class Config:
        extra = "forbid"

    def check(self) -> GeneratorParams:
        """Cross-field validation; raises ConfigError and returns self otherwise."""
        total = math.fsum(self.phase_fractions)
        if abs(total - 1.0) > 1e-9:
            msg = f"phase_fractions must sum to 1 (got {total!r})"
            raise ConfigError(msg)
        if any(f < 0 for f in self.phase_fractions):
            msg = "phase_fractions must be non-negative"
            raise ConfigError(msg)
        if not self.frames_min <= self.frames_mean <= self.frames_max:
            msg = f"need frames_min <= frames_mean <= frames_max (got {self.frames_min}, {self.frames_mean}, {self.frames_max})"
            raise ConfigError(msg)
        if self.frames_min < N_PHASES:
            msg = f"frames_min must leave room for all {N_PHASES} phases"
            raise ConfigError(msg)
        if self.min_blocking_frames > self.frames_min - (N_PHASES - 2):
            msg = "min_blocking_frames does not fit into the shortest procedure"
            raise ConfigError(msg)
        return self

    @property
    def n_ineffective(self) -> int:
        # round half up; Python's round() would send 2.5 to 2
        return int(math.floor(self.n_procedures * self.ineffective_fraction + 0.5))
