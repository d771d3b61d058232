from __future__ import annotations

import time
from collections import defaultdict
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import orjson
import torch
from loguru import logger as log
from torch import Tensor

from pmnet.core.data_manager import atomic_write
from pmnet.core.errors import DatasetFormatError, InputError
from pmnet.core.utils._internal_utils import make_progress
from pmnet.core.utils.caching import LRUDict
from pmnet.models.reports import FramePrediction, MetricReport, PredictionTrace, StreamStats, WindowPrediction
from pmnet.network.model import PmNet
from pmnet.synthgen.records import SyntheticProcedure

from .metrics import compute_report
from .windows import clip_majority, window_indices

__all__ = ["OnlineRecognizer", "FeatureExport", "stream", "evaluate", "write_trace", "read_trace"]

STAGES = ("encode", "short_term", "long_term", "readout")


@dataclass
class FeatureExport:
    """Pooled clip features with clip-majority labels, gathered while evaluating."""

    features: list[np.ndarray] = field(default_factory=list)
    labels: list[np.ndarray] = field(default_factory=list)
    procedures: list[str] = field(default_factory=list)
    frames: list[int] = field(default_factory=list)

    def add(self, procedure_id: str, frame: int, pooled: Tensor, labels: Tensor) -> None:
        self.features.append(pooled.detach().cpu().numpy().astype(np.float32))
        self.labels.append(labels.cpu().numpy().astype(np.int64))
        self.procedures.extend([procedure_id] * pooled.shape[0])
        self.frames.extend([frame] * pooled.shape[0])

    def save(self, path: Path) -> None:
        c = self.features[0].shape[-1] if self.features else 0
        arrays = {
            "features": np.concatenate(self.features) if self.features else np.zeros((0, c), dtype=np.float32),
            "labels": np.concatenate(self.labels) if self.labels else np.zeros(0, dtype=np.int64),
            "procedure": np.asarray(self.procedures, dtype=str),
            "frame": np.asarray(self.frames, dtype=np.int64),
        }
        atomic_write(Path(path), lambda fs: np.savez(fs, **arrays))


class OnlineRecognizer:
    """Causal per-frame recognizer for one procedure at a time.

    Each pushed frame is encoded once and cached; the window for frame ``t`` is then
    assembled from cached features of frames ``<= t`` only.

    """

    def __init__(self, model: PmNet, procedure_id: str = "") -> None:
        self.model = model.eval()
        cfg = model.config
        self.window = cfg.window
        self.stride = cfg.frame_stride
        self.cache: LRUDict[int, tuple[Tensor, Optional[Tensor]]] = LRUDict(size=cfg.window_span + 2)
        self.stage_seconds: dict[str, float] = defaultdict(float)
        self.encoder_calls = 0
        self.n_seen = 0
        self.trace = PredictionTrace(procedure_id=procedure_id)
        self.last_output = None

    def reset(self, procedure_id: str) -> None:
        self.cache.clear()
        self.n_seen = 0
        self.trace = PredictionTrace(procedure_id=procedure_id)

    def _timed(self, stage: str, fn, *args):
        start = time.perf_counter()
        result = fn(*args)
        self.stage_seconds[stage] += time.perf_counter() - start
        return result

    @torch.no_grad()
    def push(self, image: np.ndarray, box: Optional[np.ndarray] = None, *, label: Optional[int] = None, effective_label: Optional[bool] = None) -> FramePrediction:
        """Consume the next frame and return its prediction."""
        t = self.n_seen
        dtype = self.model.dtype
        image_t = torch.as_tensor(np.asarray(image), dtype=dtype)[None]
        box_t = torch.as_tensor(np.asarray(box), dtype=torch.long)[None] if box is not None else None
        feature, region = self._timed("encode", self.model.encode, image_t, box_t)
        self.encoder_calls += 1
        self.cache[t] = (feature[0], region[0] if region is not None else None)
        self.n_seen += 1

        idx = window_indices(t, self.window, self.stride)
        try:
            entries = [self.cache.peek(int(i)) for i in idx]
        except KeyError as e:
            msg = f"frame {e.args[0]} fell out of the feature cache while predicting frame {t}"
            raise InputError(msg) from None
        features = torch.stack([f for f, _ in entries])[None]
        regions = torch.stack([r for _, r in entries])[None] if region is not None else None

        clips = self._timed("short_term", self.model.short_term, features)
        memory = self._timed("long_term", self.model.long_term, clips, regions)
        out = self._timed("readout", self.model.readout, clips, memory)
        self.last_output = out

        # the target frame is the last real row of the window
        probs = torch.softmax(out.phase_logits[0, self.window - 1], dim=-1)
        effect = torch.softmax(out.effect_logits[0], dim=-1)
        frame = FramePrediction(
            procedure_id=self.trace.procedure_id,
            index=t,
            phase=int(probs.argmax()),
            probabilities=probs.tolist(),
            label=label,
            effective_label=effective_label,
            ineffective_prob=float(effect[0]),
        )
        window = WindowPrediction(start=int(idx[0]), end=t, logits=out.effect_logits[0].tolist())
        self.trace.append(frame, window)
        return frame

    def stats(self, seconds: float) -> StreamStats:
        n = self.n_seen
        return StreamStats(
            n_frames=n,
            seconds=seconds,
            fps=n / seconds if seconds > 0 else 0.0,
            encoder_calls=self.encoder_calls,
            n_parameters=self.model.n_parameters,
            stage_ms={stage: 1000.0 * self.stage_seconds[stage] / max(n, 1) for stage in STAGES},
        )


def _label_of(proc: SyntheticProcedure, t: int) -> tuple[int, Optional[bool]]:
    flag = int(proc.effective[t])
    return int(proc.phases[t]), None if flag < 0 else bool(flag)


def stream(
    model: PmNet,
    procedure: SyntheticProcedure,
    *,
    truncate: Optional[int] = None,
    features: Optional[FeatureExport] = None,
) -> tuple[PredictionTrace, StreamStats]:
    """Feed a procedure frame by frame, strictly in order.

    Parameters
    ----------
    truncate : Optional[int]
        Stop after frame ``truncate`` (inclusive).
    features : Optional[FeatureExport]
        When given, collects the pooled clip features of every window.

    """
    n = len(procedure) if truncate is None else min(len(procedure), truncate + 1)
    if truncate is not None and truncate < 0:
        msg = f"truncate must be >= 0 (got {truncate})"
        raise InputError(msg)
    recognizer = OnlineRecognizer(model, procedure.id)
    use_boxes = model.config.use_region
    start = time.perf_counter()
    for t in range(n):
        label, effective = _label_of(procedure, t)
        recognizer.push(procedure.images[t], procedure.boxes[t] if use_boxes else None, label=label, effective_label=effective)
        if features is not None:
            idx = window_indices(t, model.config.window, model.config.frame_stride)
            clip_labels = clip_majority(torch.as_tensor(np.asarray(procedure.phases[idx])), model.config.clip_width)
            features.add(procedure.id, t, recognizer.last_output.clip_pooled[0], clip_labels)
    seconds = time.perf_counter() - start
    stats = recognizer.stats(seconds)
    log.debug("Streamed {} frames of {} at {:.1f} fps", n, procedure.id, stats.fps)
    return recognizer.trace, stats


def evaluate(
    model: PmNet,
    procedures: Sequence[SyntheticProcedure],
    *,
    features: Optional[FeatureExport] = None,
    progress: bool = True,
) -> tuple[MetricReport, list[PredictionTrace]]:
    """Score procedures through the same causal path as :func:`stream`.

    Knotting frames take the effectiveness prediction of the window that ends on them.

    """
    traces = []
    labels, preds, effective, predicted_effective = [], [], [], []
    with make_progress() as bar:
        task = bar.add_task("evaluating", total=len(procedures), visible=progress)
        for proc in procedures:
            trace, _ = stream(model, proc, features=features)
            traces.append(trace)
            labels.append(np.asarray(proc.phases))
            preds.append(np.asarray(trace.predicted_phases, dtype=np.int64))
            effective.append(np.asarray(proc.effective) > 0)
            predicted_effective.append(np.array([f.ineffective_prob is not None and f.ineffective_prob < 0.5 for f in trace.frames], dtype=bool))
            bar.advance(task)
    if not procedures:
        empty = np.zeros(0, dtype=np.int64)
        return compute_report(empty, empty, empty.astype(bool), empty.astype(bool)), traces
    report = compute_report(np.concatenate(labels), np.concatenate(preds), np.concatenate(effective), np.concatenate(predicted_effective))
    return report, traces


def write_trace(trace: PredictionTrace, path: Path) -> None:
    """One JSON line per frame, holding the frame prediction and its window."""
    lines = [orjson.dumps({"frame": f.dict(), "window": w.dict()}) + b"\n" for f, w in zip(trace.frames, trace.windows)]
    payload = b"".join(lines)
    atomic_write(Path(path), lambda fs: fs.write(payload))


def read_trace(path: Path) -> PredictionTrace:
    path = Path(path)
    try:
        raw_lines = path.read_bytes().splitlines()
    except FileNotFoundError:
        raise DatasetFormatError(path, "file is missing") from None
    trace: Optional[PredictionTrace] = None
    for lineno, raw in enumerate(raw_lines):
        if not raw.strip():
            continue
        try:
            record = orjson.loads(raw)
            frame = FramePrediction.parse_obj(record["frame"])
            window = WindowPrediction.parse_obj(record["window"])
        except (orjson.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise DatasetFormatError(path, f"line {lineno + 1}: {e}") from None
        if trace is None:
            trace = PredictionTrace(procedure_id=frame.procedure_id)
        trace.append(frame, window)
    if trace is None:
        raise DatasetFormatError(path, "trace holds no frames")
    return trace
