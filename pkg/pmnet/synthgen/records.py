from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from pmnet.models.synth import PhaseLabel


@dataclass(frozen=True, eq=False)
class FrameRecord:
    image: np.ndarray
    phase: PhaseLabel
    effective: Optional[bool]
    box: tuple[int, int, int, int]
    t_seconds: float


def _same_array(a: np.ndarray, b: np.ndarray) -> bool:
    return a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()


@dataclass(eq=False)
class SyntheticProcedure:
    """One generated procedure, stored column-wise.

    ``images`` is (N, H, W, 3) float32 in [0, 1]; ``effective`` is int8 with 1/0 on
    Knotting frames and -1 everywhere else; ``boxes`` is (N, 4) as (x, y, w, h).
    ``images`` may be a read-only memmap when loaded from disk.

    """

    id: str
    images: np.ndarray
    phases: np.ndarray
    effective: np.ndarray
    boxes: np.ndarray
    t_seconds: np.ndarray
    effective_case: bool

    def __len__(self) -> int:
        return int(self.phases.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SyntheticProcedure):
            return NotImplemented
        return (
            self.id == other.id
            and self.effective_case == other.effective_case
            and all(
                _same_array(np.asarray(a), np.asarray(b))
                for a, b in (
                    (self.images, other.images),
                    (self.phases, other.phases),
                    (self.effective, other.effective),
                    (self.boxes, other.boxes),
                    (self.t_seconds, other.t_seconds),
                )
            )
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def height(self) -> int:
        return int(self.images.shape[1])

    @property
    def width(self) -> int:
        return int(self.images.shape[2])

    def frame(self, index: int) -> FrameRecord:
        flag = int(self.effective[index])
        return FrameRecord(
            image=self.images[index],
            phase=PhaseLabel(int(self.phases[index])),
            effective=None if flag < 0 else bool(flag),
            box=tuple(int(v) for v in self.boxes[index]),
            t_seconds=float(self.t_seconds[index]),
        )

    @property
    def frames(self) -> list[FrameRecord]:
        return [self.frame(i) for i in range(len(self))]
