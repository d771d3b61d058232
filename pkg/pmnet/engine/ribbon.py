from __future__ import annotations

import csv
import io
from collections.abc import Sequence
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, PngImagePlugin

from pmnet.core.data_manager import atomic_write
from pmnet.core.errors import DatasetFormatError, InputError
from pmnet.models.reports import PredictionTrace
from pmnet.models.synth import PhaseLabel

__all__ = ["PALETTE", "palette_header", "export_ribbon", "ribbon_image", "decode_ribbon"]

PALETTE: dict[PhaseLabel, tuple[int, int, int]] = {
    PhaseLabel.PREPARING: (0x4E, 0x79, 0xA7),
    PhaseLabel.KNOTTING: (0xE1, 0x57, 0x59),
    PhaseLabel.RESECTING: (0x59, 0xA1, 0x4F),
    PhaseLabel.RELEASING: (0xF2, 0x8E, 0x2B),
    PhaseLabel.POSTPROCESSING: (0xB0, 0x7A, 0xA1),
}
BAR_HEIGHT = 12
GAP = 2
GAP_COLOR = (255, 255, 255)


def _hex(rgb: tuple[int, int, int]) -> str:
    return "#{:02X}{:02X}{:02X}".format(*rgb)


def palette_header() -> str:
    return "palette: " + ", ".join(f"{int(p)}={p.display_name} {_hex(rgb)}" for p, rgb in PALETTE.items())


def ribbon_image(labels: Sequence[int], predictions: Sequence[int], *, bar_height: int = BAR_HEIGHT) -> Image.Image:
    """Ground truth bar on top, prediction bar below, one pixel column per frame."""
    if len(labels) != len(predictions):
        msg = f"{len(labels)} labels for {len(predictions)} predictions"
        raise InputError(msg)
    if not len(labels):
        msg = "cannot draw a ribbon for zero frames"
        raise InputError(msg)
    lut = np.array([PALETTE[p] for p in PhaseLabel], dtype=np.uint8)
    canvas = np.empty((2 * bar_height + GAP, len(labels), 3), dtype=np.uint8)
    canvas[:] = GAP_COLOR
    canvas[:bar_height] = lut[np.asarray(labels, dtype=np.int64)][None]
    canvas[bar_height + GAP :] = lut[np.asarray(predictions, dtype=np.int64)][None]
    return Image.fromarray(canvas)


def export_ribbon(trace: PredictionTrace, labels: Optional[Sequence[int]], out_path: Path, *, csv_path: Optional[Path] = None) -> tuple[Path, Path]:
    """Write the PNG ribbon and its per-frame CSV.

    ``labels`` defaults to the labels recorded in the trace. The CSV goes next to the
    PNG (same stem) unless ``csv_path`` is given.

    """
    out_path = Path(out_path)
    csv_path = Path(csv_path) if csv_path is not None else out_path.with_suffix(".csv")
    predictions = trace.predicted_phases
    if labels is None:
        if any(f.label is None for f in trace.frames):
            msg = "trace carries no labels; pass them explicitly"
            raise InputError(msg)
        labels = [int(f.label) for f in trace.frames]
    labels = [int(v) for v in labels]

    image = ribbon_image(labels, predictions)
    meta = PngImagePlugin.PngInfo()
    meta.add_text("palette", palette_header())
    meta.add_text("procedure", trace.procedure_id)
    meta.add_text("bar_height", str(BAR_HEIGHT))
    png = io.BytesIO()
    image.save(png, format="PNG", pnginfo=meta)
    atomic_write(out_path, lambda fs: fs.write(png.getvalue()))

    text = io.StringIO()
    text.write(f"# {palette_header()}\n")
    writer = csv.writer(text, lineterminator="\n")
    writer.writerow(["index", "label", "prediction"])
    for frame, label in zip(trace.frames, labels):
        writer.writerow([frame.index, label, frame.phase])
    atomic_write(csv_path, lambda fs: fs.write(text.getvalue()), binary=False)
    return out_path, csv_path


def decode_ribbon(path: Path) -> tuple[list[int], list[int]]:
    """Read a ribbon PNG back into its label and prediction sequences."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            bar_height = int(img.info.get("bar_height", BAR_HEIGHT))
            pixels = np.asarray(img.convert("RGB"))
    except (OSError, ValueError) as e:
        raise DatasetFormatError(path, f"unreadable ribbon ({e})") from None
    colors = {rgb: int(p) for p, rgb in PALETTE.items()}

    def _row(row: np.ndarray) -> list[int]:
        try:
            return [colors[tuple(int(v) for v in px)] for px in row]
        except KeyError as e:
            raise DatasetFormatError(path, f"pixel color {e.args[0]} is not in the palette") from None

    return _row(pixels[0]), _row(pixels[bar_height + GAP])
