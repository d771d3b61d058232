from __future__ import annotations

from .dataset import SPLITS, DatasetManifest, ProcedureEntry
from .reports import EffectivenessMetrics, FramePrediction, MetricReport, PhaseMetrics, PredictionTrace, StreamStats, WindowPrediction
from .run import RunConfig
from .synth import BLOCKING_PHASES, GeneratorParams, PhaseLabel

__all__ = [
    "BLOCKING_PHASES",
    "DatasetManifest",
    "EffectivenessMetrics",
    "FramePrediction",
    "GeneratorParams",
    "MetricReport",
    "PhaseLabel",
    "PhaseMetrics",
    "PredictionTrace",
    "ProcedureEntry",
    "RunConfig",
    "SPLITS",
    "StreamStats",
    "WindowPrediction",
]
