from __future__ import annotations

import numpy as np
import pytest
import torch

from pmnet.core.errors import DatasetFormatError, InternalError
from pmnet.engine.recognizer import FeatureExport, OnlineRecognizer, evaluate, read_trace, stream, write_trace
from pmnet.models.reports import FramePrediction, PredictionTrace, WindowPrediction
from pmnet.models.run import RunConfig
from pmnet.network.model import PmNet
from pmnet.synthgen.generator import generate_procedures
from pmnet.synthgen.records import SyntheticProcedure

from .conftest import tiny_config, tiny_params


@pytest.fixture(scope="module")
def model() -> PmNet:
    torch.manual_seed(0)
    return PmNet.from_config(tiny_config()).eval()


@pytest.fixture(scope="module")
def five_procedures() -> list[SyntheticProcedure]:
    return generate_procedures(tiny_params(n_procedures=5, seed=11), workers=1)


@pytest.fixture(scope="module")
def default_geometry_model() -> PmNet:
    torch.manual_seed(0)
    config = tiny_config(window=20, frame_stride=8)
    assert (config.window, config.frame_stride) == (RunConfig().window, RunConfig().frame_stride)
    return PmNet.from_config(config).eval()


@pytest.fixture(scope="module")
def long_procedure() -> SyntheticProcedure:
    (proc,) = generate_procedures(tiny_params(n_procedures=1, frames_min=200, frames_max=230, frames_mean=215), workers=1)
    return proc


def _assert_prefix_identical(partial: PredictionTrace, full: PredictionTrace, cut: int) -> None:
    assert len(partial.frames) == cut + 1
    for a, b in zip(partial.frames, full.frames):
        assert a.probabilities == b.probabilities
        assert a.phase == b.phase
        assert a.ineffective_prob == b.ineffective_prob


@pytest.mark.parametrize("which", range(5))
def test_truncation_leaves_earlier_predictions_unchanged(model, five_procedures, which):
    proc = five_procedures[which]
    full, _ = stream(model, proc)
    cuts = np.random.default_rng(100 + which).choice(len(proc) - 1, size=10, replace=False)
    for cut in sorted(int(c) for c in cuts):
        partial, _ = stream(model, proc, truncate=cut)
        _assert_prefix_identical(partial, full, cut)


def test_default_window_geometry_streams_long_procedures(default_geometry_model, long_procedure):
    proc = long_procedure
    model = default_geometry_model
    assert len(proc) > model.config.window_span + 2
    recognizer = OnlineRecognizer(model, proc.id)
    for t in range(len(proc)):
        recognizer.push(proc.images[t], proc.boxes[t])
    assert recognizer.encoder_calls == len(proc)
    assert len(recognizer.cache) == model.config.window_span + 2
    assert recognizer.cache.evictions == len(proc) - len(recognizer.cache)
    assert [w.start for w in recognizer.trace.windows[-3:]] == [len(proc) - 3 - model.config.window_span + i for i in range(3)]


def test_default_window_geometry_truncation(default_geometry_model, long_procedure):
    full, _ = stream(default_geometry_model, long_procedure)
    assert len(full.frames) == len(long_procedure)
    span = default_geometry_model.config.window_span
    cuts = np.random.default_rng(7).integers(span, len(long_procedure) - 1, size=3)
    for cut in [0, span // 2, *sorted(int(c) for c in cuts)]:
        partial, _ = stream(default_geometry_model, long_procedure, truncate=cut)
        _assert_prefix_identical(partial, full, cut)


def test_future_frames_do_not_leak(model, tiny_procedures):
    proc = tiny_procedures[1]
    t = 20
    images = np.array(proc.images, copy=True)
    images[t + 1 :] = 1.0 - images[t + 1 :]
    altered = SyntheticProcedure(proc.id, images, proc.phases, proc.effective, proc.boxes, proc.t_seconds, proc.effective_case)
    a, _ = stream(model, proc, truncate=t + 5)
    b, _ = stream(model, altered, truncate=t + 5)
    assert [f.probabilities for f in a.frames[: t + 1]] == [f.probabilities for f in b.frames[: t + 1]]
    assert a.frames[t + 1].probabilities != b.frames[t + 1].probabilities


def test_single_frame_procedure(model, tiny_procedures):
    proc = tiny_procedures[0]
    single = SyntheticProcedure(proc.id, proc.images[:1], proc.phases[:1], proc.effective[:1], proc.boxes[:1], proc.t_seconds[:1], proc.effective_case)
    trace, stats = stream(model, single)
    assert len(trace.frames) == 1
    assert stats.n_frames == 1
    assert sum(trace.frames[0].probabilities) == pytest.approx(1.0, abs=1e-5)


def test_one_encoder_call_per_frame(model, tiny_procedures):
    proc = tiny_procedures[2]
    trace, stats = stream(model, proc)
    assert stats.encoder_calls == len(proc)
    assert [f.index for f in trace.frames] == list(range(len(proc)))
    assert stats.fps > 0
    assert set(stats.stage_ms) == {"encode", "short_term", "long_term", "readout"}
    assert stats.n_parameters == model.n_parameters


def test_windows_end_at_their_frame(model, tiny_procedures):
    trace, _ = stream(model, tiny_procedures[0], truncate=9)
    assert [w.end for w in trace.windows] == list(range(10))
    assert all(w.start <= w.end for w in trace.windows)
    assert all(len(w.logits) == 2 for w in trace.windows)


def test_recognizer_cache_is_bounded(model, tiny_procedures):
    proc = tiny_procedures[0]
    recognizer = OnlineRecognizer(model, proc.id)
    for t in range(len(proc)):
        recognizer.push(proc.images[t], proc.boxes[t])
    assert len(recognizer.cache) <= model.config.window_span + 2


def test_evaluate_agrees_with_stream(model, tiny_procedures):
    report, traces = evaluate(model, tiny_procedures, progress=False)
    assert report.n_frames == sum(len(p) for p in tiny_procedures)
    for proc, trace in zip(tiny_procedures, traces):
        streamed, _ = stream(model, proc)
        assert trace.predicted_phases == streamed.predicted_phases


def test_feature_export(model, tiny_procedures, tmp_path):
    export = FeatureExport()
    stream(model, tiny_procedures[0], truncate=4, features=export)
    path = tmp_path / "features.npz"
    export.save(path)
    with np.load(path) as data:
        n_clips = model.config.window // model.config.clip_width
        assert data["features"].shape == (5 * n_clips, model.config.channels)
        assert data["labels"].shape == (5 * n_clips,)
        assert set(data["procedure"].tolist()) == {tiny_procedures[0].id}


def test_trace_round_trip(model, tiny_procedures, tmp_path):
    trace, _ = stream(model, tiny_procedures[0], truncate=12)
    path = tmp_path / "trace.jsonl"
    write_trace(trace, path)
    assert read_trace(path) == trace


def test_trace_read_errors(tmp_path):
    with pytest.raises(DatasetFormatError):
        read_trace(tmp_path / "missing.jsonl")
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{not json\n")
    with pytest.raises(DatasetFormatError, match="line 1"):
        read_trace(bad)


def test_trace_is_append_only():
    trace = PredictionTrace(procedure_id="proc000")
    window = WindowPrediction(start=0, end=0, logits=[0.0, 0.0])
    trace.append(FramePrediction(procedure_id="proc000", index=0, phase=0, probabilities=[1, 0, 0, 0, 0]), window)
    with pytest.raises(InternalError):
        trace.append(FramePrediction(procedure_id="proc000", index=0, phase=0, probabilities=[1, 0, 0, 0, 0]), window)
    with pytest.raises(InternalError):
        trace.append(FramePrediction(procedure_id="proc001", index=1, phase=0, probabilities=[1, 0, 0, 0, 0]), window)
