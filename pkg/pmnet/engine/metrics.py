from __future__ import annotations

from collections.abc import Iterable
from pathlib import Path
from typing import Optional

import numpy as np
import orjson

from pmnet.core.data_manager import atomic_write
from pmnet.core.utils.chat_formatting import render_table
from pmnet.models.reports import EffectivenessMetrics, MetricReport, PhaseMetrics
from pmnet.models.synth import N_PHASES, PhaseLabel

__all__ = ["confusion_matrix", "phase_report", "effectiveness_metrics", "compute_report", "metric_records", "write_metric_records", "format_report"]


def confusion_matrix(labels: np.ndarray, predictions: np.ndarray, n_classes: int = N_PHASES) -> np.ndarray:
    """``cm[i, j]`` counts frames labelled ``i`` and predicted ``j``."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    predictions = np.asarray(predictions, dtype=np.int64).reshape(-1)
    return np.bincount(labels * n_classes + predictions, minlength=n_classes * n_classes).reshape(n_classes, n_classes)


def _percent(num: int, den: int) -> Optional[float]:
    return None if den == 0 else 100.0 * num / den


def _mean_defined(values: Iterable[Optional[float]]) -> Optional[float]:
    defined = [v for v in values if v is not None]
    return float(np.mean(defined)) if defined else None


def phase_report(labels: np.ndarray, predictions: np.ndarray) -> MetricReport:
    """Per-phase precision, recall and Jaccard with their macro means and frame accuracy.

    A ratio with a zero denominator is undefined (``None``) and left out of the macro mean.

    """
    cm = confusion_matrix(labels, predictions)
    tp = np.diag(cm)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    phases = [
        PhaseMetrics(
            phase=PhaseLabel(j).display_name,
            precision=_percent(int(tp[j]), int(tp[j] + fp[j])),
            recall=_percent(int(tp[j]), int(tp[j] + fn[j])),
            jaccard=_percent(int(tp[j]), int(tp[j] + fp[j] + fn[j])),
            support=int(tp[j] + fn[j]),
        )
        for j in range(N_PHASES)
    ]
    n = int(cm.sum())
    return MetricReport(
        phases=phases,
        macro_precision=_mean_defined(p.precision for p in phases),
        macro_recall=_mean_defined(p.recall for p in phases),
        macro_jaccard=_mean_defined(p.jaccard for p in phases),
        accuracy=_percent(int(tp.sum()), n),
        n_frames=n,
    )


def effectiveness_metrics(phases: np.ndarray, effective: np.ndarray, predicted_effective: np.ndarray) -> EffectivenessMetrics:
    """Blocking-effectiveness scores on Knotting frames only, ineffective being the positive class."""
    knot = np.asarray(phases).reshape(-1) == PhaseLabel.KNOTTING
    truth = ~np.asarray(effective, dtype=bool).reshape(-1)[knot]
    guess = ~np.asarray(predicted_effective, dtype=bool).reshape(-1)[knot]
    n = int(knot.sum())
    if n == 0:
        return EffectivenessMetrics()
    tp = int((truth & guess).sum())
    fp = int((~truth & guess).sum())
    fn = int((truth & ~guess).sum())
    return EffectivenessMetrics(
        precision=_percent(tp, tp + fp),
        recall=_percent(tp, tp + fn),
        accuracy=_percent(int((truth == guess).sum()), n),
        jaccard=_percent(tp, tp + fp + fn),
        n_frames=n,
    )


def compute_report(
    labels: np.ndarray,
    predictions: np.ndarray,
    effective: Optional[np.ndarray] = None,
    predicted_effective: Optional[np.ndarray] = None,
) -> MetricReport:
    report = phase_report(labels, predictions)
    if effective is not None and predicted_effective is not None:
        report.effectiveness = effectiveness_metrics(labels, effective, predicted_effective)
    return report


def metric_records(report: MetricReport) -> list[dict]:
    """Flatten a report into ``{name, phase, value}`` records; ``phase`` is null for summary values."""
    records = []
    for p in report.phases:
        for name in ("precision", "recall", "jaccard"):
            records.append({"name": name, "phase": p.phase, "value": getattr(p, name)})
    for name in ("macro_precision", "macro_recall", "macro_jaccard", "accuracy"):
        records.append({"name": name, "phase": None, "value": getattr(report, name)})
    eff = report.effectiveness
    for name in ("precision", "recall", "accuracy", "jaccard"):
        records.append({"name": f"effectiveness_{name}", "phase": PhaseLabel.KNOTTING.display_name, "value": getattr(eff, name)})
    return records


def write_metric_records(report: MetricReport, path: Path) -> None:
    payload = b"".join(orjson.dumps(r) + b"\n" for r in metric_records(report))
    atomic_write(Path(path), lambda fs: fs.write(payload))


def format_report(report: MetricReport) -> str:
    rows = [[p.phase, p.precision, p.recall, p.jaccard, p.support] for p in report.phases]
    rows.append(["macro", report.macro_precision, report.macro_recall, report.macro_jaccard, report.n_frames])
    table = render_table(rows, ["phase", "precision", "recall", "jaccard", "frames"])
    eff = report.effectiveness
    eff_table = render_table(
        [["ineffective (Knotting frames)", eff.precision, eff.recall, eff.accuracy, eff.jaccard, eff.n_frames]],
        ["effectiveness", "precision", "recall", "accuracy", "jaccard", "frames"],
    )
    accuracy = render_table([["frame accuracy", report.accuracy]], ["", "value"])
    return f"{table}\n\n{accuracy}\n\n{eff_table}"
