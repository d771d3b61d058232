from __future__ import annotations

import numpy as np
import orjson
import pytest

from pmnet.engine.metrics import compute_report, effectiveness_metrics, format_report, metric_records, phase_report, write_metric_records
from pmnet.models.synth import N_PHASES, PhaseLabel

K, RS = int(PhaseLabel.KNOTTING), int(PhaseLabel.RESECTING)


def test_identical_predictions_score_100(rng):
    labels = rng.integers(0, N_PHASES, size=300)
    report = phase_report(labels, labels)
    assert report.accuracy == 100.0
    assert all(p.jaccard == 100.0 for p in report.phases)
    assert report.macro_jaccard == 100.0


def test_three_frame_toy():
    report = phase_report(np.array([K, K, RS]), np.array([K, RS, RS]))
    knot = report.phases[K]
    resect = report.phases[RS]
    assert (knot.precision, knot.recall, knot.jaccard) == (100.0, 50.0, 50.0)
    assert (resect.precision, resect.recall, resect.jaccard) == (50.0, 100.0, 50.0)
    assert report.accuracy == pytest.approx(66.67, abs=0.01)
    assert report.phases[int(PhaseLabel.PREPARING)].precision is None
    assert report.macro_jaccard == 50.0


def _oracle(labels, preds):
    per_phase = []
    for j in range(N_PHASES):
        tp = sum(1 for a, b in zip(labels, preds) if a == j and b == j)
        fp = sum(1 for a, b in zip(labels, preds) if a != j and b == j)
        fn = sum(1 for a, b in zip(labels, preds) if a == j and b != j)
        per_phase.append((100 * tp / (tp + fp), 100 * tp / (tp + fn), 100 * tp / (tp + fp + fn)))
    return per_phase


def test_macro_metrics_match_brute_force_oracle(rng):
    labels = rng.integers(0, N_PHASES, size=1000).tolist()
    preds = rng.integers(0, N_PHASES, size=1000).tolist()
    report = phase_report(np.array(labels), np.array(preds))
    expected = _oracle(labels, preds)
    for phase, (p, r, j) in zip(report.phases, expected):
        assert phase.precision == pytest.approx(p)
        assert phase.recall == pytest.approx(r)
        assert phase.jaccard == pytest.approx(j)
    assert report.macro_precision == pytest.approx(np.mean([e[0] for e in expected]))
    assert report.macro_recall == pytest.approx(np.mean([e[1] for e in expected]))
    assert report.macro_jaccard == pytest.approx(np.mean([e[2] for e in expected]))
    assert report.accuracy == pytest.approx(100 * sum(a == b for a, b in zip(labels, preds)) / 1000)


def test_jaccard_never_exceeds_precision_or_recall(rng):
    for _ in range(20):
        labels = rng.integers(0, N_PHASES, size=200)
        preds = np.where(rng.random(200) < 0.6, labels, rng.integers(0, N_PHASES, size=200))
        for p in phase_report(labels, preds).phases:
            if None not in (p.precision, p.recall, p.jaccard):
                assert p.jaccard <= min(p.precision, p.recall) + 1e-9
                assert 0 <= p.jaccard <= 100


def test_effectiveness_uses_knotting_frames_only():
    phases = np.array([0, K, K, K, K, 2])
    effective = np.array([-1, 0, 0, 1, 1, -1])
    predicted = np.array([0, 0, 1, 1, 0, 0])
    metrics = effectiveness_metrics(phases, effective, predicted)
    # ineffective is positive: tp=1 (frame 1), fn=1 (frame 2), fp=1 (frame 4)
    assert metrics.n_frames == 4
    assert metrics.precision == 50.0
    assert metrics.recall == 50.0
    assert metrics.accuracy == 50.0
    assert metrics.jaccard == pytest.approx(100 / 3)


def test_no_knotting_frames_leaves_effectiveness_undefined():
    report = compute_report(np.array([0, 2, 2]), np.array([0, 2, 2]), np.array([-1, -1, -1]), np.array([1, 1, 1]))
    eff = report.effectiveness
    assert eff.n_frames == 0
    assert (eff.precision, eff.recall, eff.accuracy, eff.jaccard) == (None, None, None, None)
    assert "n/a" in format_report(report)


def test_metric_records_round_trip(tmp_path):
    report = compute_report(np.array([K, K, RS]), np.array([K, RS, RS]), np.array([1, 0, -1]), np.array([1, 1, 1]))
    path = tmp_path / "metrics.jsonl"
    write_metric_records(report, path)
    records = [orjson.loads(line) for line in path.read_bytes().splitlines()]
    assert records == metric_records(report)
    assert {r["name"] for r in records} >= {"precision", "recall", "jaccard", "macro_jaccard", "accuracy", "effectiveness_precision"}
    assert all(set(r) == {"name", "phase", "value"} for r in records)
    knot_jaccard = next(r for r in records if r["name"] == "jaccard" and r["phase"] == "Knotting")
    assert knot_jaccard["value"] == 50.0


def _ratio(num, den):
    return None if den == 0 else 100.0 * num / den


def _counting_oracle(labels, preds, effective, predicted_effective):
    """Frame-by-frame counts, independent of the confusion-matrix path."""
    phases = []
    for j in range(N_PHASES):
        tp = fp = fn = 0
        for a, b in zip(labels, preds):
            tp += a == j and b == j
            fp += a != j and b == j
            fn += a == j and b != j
        phases.append((_ratio(tp, tp + fp), _ratio(tp, tp + fn), _ratio(tp, tp + fp + fn)))
    tp = fp = fn = hits = n = 0
    for a, eff, guess in zip(labels, effective, predicted_effective):
        if a != K:
            continue
        n += 1
        ineffective, flagged = eff == 0, not guess
        tp += ineffective and flagged
        fp += not ineffective and flagged
        fn += ineffective and not flagged
        hits += ineffective == flagged
    eff = (_ratio(tp, tp + fp), _ratio(tp, tp + fn), _ratio(hits, n), _ratio(tp, tp + fp + fn), n)
    return phases, eff


def _macro(values):
    defined = [v for v in values if v is not None]
    return sum(defined) / len(defined) if defined else None


def test_reports_match_counting_oracle_on_random_sequences():
    gen = np.random.default_rng(20240917)
    for _ in range(1000):
        n = int(gen.integers(1, 60))
        labels = gen.integers(0, N_PHASES, size=n)
        # short sequences leave phases empty, so undefined ratios show up too
        preds = np.where(gen.random(n) < 0.5, labels, gen.integers(0, N_PHASES, size=n))
        effective = np.where(labels == K, gen.integers(0, 2, size=n), -1)
        predicted_effective = gen.random(n) < 0.7
        report = compute_report(labels, preds, effective, predicted_effective)
        phases, eff = _counting_oracle(labels.tolist(), preds.tolist(), effective.tolist(), predicted_effective.tolist())

        assert [(p.precision, p.recall, p.jaccard) for p in report.phases] == phases
        for name, i in (("macro_precision", 0), ("macro_recall", 1), ("macro_jaccard", 2)):
            expected = _macro(p[i] for p in phases)
            assert getattr(report, name) == (None if expected is None else pytest.approx(expected, rel=1e-12))
        assert report.accuracy == _ratio(int((labels == preds).sum()), n)
        got = report.effectiveness
        assert (got.precision, got.recall, got.accuracy, got.jaccard, got.n_frames) == eff
