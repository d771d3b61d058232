from __future__ import annotations

from .ablation import DEFAULT_VARIANTS, VARIANTS, AblationResult, format_ablation, run_ablation, run_ablation_on, variant_config
from .checkpoint import last_checkpoint_path, load_checkpoint, read_checkpoint, save_checkpoint
from .metrics import compute_report, confusion_matrix, effectiveness_metrics, format_report, metric_records, phase_report, write_metric_records
from .recognizer import FeatureExport, OnlineRecognizer, evaluate, read_trace, stream, write_trace
from .ribbon import PALETTE, decode_ribbon, export_ribbon, ribbon_image
from .trainer import Trainer, TrainResult, seed_everything, train
from .windows import WindowDataset, clip_majority, make_windows, window_effect_label, window_indices

__all__ = [
    "AblationResult",
    "DEFAULT_VARIANTS",
    "FeatureExport",
    "OnlineRecognizer",
    "PALETTE",
    "TrainResult",
    "Trainer",
    "VARIANTS",
    "WindowDataset",
    "clip_majority",
    "compute_report",
    "confusion_matrix",
    "decode_ribbon",
    "effectiveness_metrics",
    "evaluate",
    "export_ribbon",
    "format_ablation",
    "format_report",
    "last_checkpoint_path",
    "load_checkpoint",
    "make_windows",
    "metric_records",
    "phase_report",
    "read_checkpoint",
    "read_trace",
    "ribbon_image",
    "run_ablation",
    "run_ablation_on",
    "save_checkpoint",
    "seed_everything",
    "stream",
    "train",
    "variant_config",
    "window_effect_label",
    "window_indices",
    "write_metric_records",
    "write_trace",
]
