from __future__ import annotations

from typing import Optional

from pydantic import BaseModel

from pmnet.core.errors import InternalError


class PhaseMetrics(BaseModel):
    phase: str
    precision: Optional[float] = None
    recall: Optional[float] = None
    jaccard: Optional[float] = None
    support: int = 0


class EffectivenessMetrics(BaseModel):
    """Blocking effectiveness on Knotting frames, positive class = ineffective."""

    precision: Optional[float] = None
    recall: Optional[float] = None
    accuracy: Optional[float] = None
    jaccard: Optional[float] = None
    n_frames: int = 0


class MetricReport(BaseModel):
    phases: list[PhaseMetrics]
    macro_precision: Optional[float] = None
    macro_recall: Optional[float] = None
    macro_jaccard: Optional[float] = None
    accuracy: Optional[float] = None
    n_frames: int = 0
    effectiveness: EffectivenessMetrics = EffectivenessMetrics()


class FramePrediction(BaseModel):
    procedure_id: str
    index: int
    phase: int
    probabilities: list[float]
    label: Optional[int] = None
    effective_label: Optional[bool] = None
    ineffective_prob: Optional[float] = None


class WindowPrediction(BaseModel):
    start: int
    end: int
    logits: list[float]


class PredictionTrace(BaseModel):
    procedure_id: str
    frames: list[FramePrediction] = []
    windows: list[WindowPrediction] = []

    def append(self, frame: FramePrediction, window: WindowPrediction) -> None:
        if frame.procedure_id != self.procedure_id:
            msg = f"frame from {frame.procedure_id} appended to trace of {self.procedure_id}"
            raise InternalError(msg)
        if self.frames and frame.index <= self.frames[-1].index:
            msg = f"trace is append-only in time order (got frame {frame.index} after {self.frames[-1].index})"
            raise InternalError(msg)
        self.frames.append(frame)
        self.windows.append(window)

    @property
    def predicted_phases(self) -> list[int]:
        return [f.phase for f in self.frames]


class StreamStats(BaseModel):
    n_frames: int
    seconds: float
    fps: float
    encoder_calls: int
    n_parameters: int
    stage_ms: dict[str, float]
