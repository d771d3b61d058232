from __future__ import annotations

import math
import struct
from collections.abc import Sequence
from pathlib import Path
from typing import Optional

import numpy as np
import xxhash
from loguru import logger as log
from pydantic import ValidationError

from pmnet import VersionInfo, __version__, version_info
from pmnet.core import data_manager
from pmnet.core.errors import DatasetFormatError
from pmnet.core.utils import run_threaded
from pmnet.core.utils._internal_utils import safe_delete
from pmnet.models.dataset import MANIFEST_FORMAT, SPLITS, DatasetManifest, ProcedureEntry
from pmnet.models.synth import GeneratorParams, PhaseLabel

from .generator import generate_procedure, ineffective_indices
from .records import SyntheticProcedure

__all__ = [
    "FRAMES_MAGIC",
    "HEADER",
    "default_splits",
    "write_procedure",
    "write_dataset",
    "read_manifest",
    "read_procedure",
    "read_dataset",
    "generate_dataset",
]

FRAMES_MAGIC = b"PMFT"
# magic, height, width, channels, 2 pad bytes, frame count
HEADER = struct.Struct("<4sHHHxxI")
LABELS_HEADER = "# index t_seconds phase effective x y w h"
_HASH_CHUNK = 1 << 20


def default_splits(ids: Sequence[str], *, val_fraction: float = 0.1, test_fraction: float = 0.2) -> dict[str, list[str]]:
    """Train/val/test by index order: 50 procedures give 35/5/10."""
    n = len(ids)
    n_test = int(math.floor(n * test_fraction + 0.5))
    n_val = min(int(math.floor(n * val_fraction + 0.5)), n - n_test)
    n_train = n - n_val - n_test
    return {
        "train": list(ids[:n_train]),
        "val": list(ids[n_train : n_train + n_val]),
        "test": list(ids[n_train + n_val :]),
    }


def _frames_bytes(images: np.ndarray) -> bytes:
    n, h, w, c = images.shape
    payload = np.ascontiguousarray(images, dtype="<f4").tobytes()
    return HEADER.pack(FRAMES_MAGIC, h, w, c, n) + payload


def _format_label_line(proc: SyntheticProcedure, i: int) -> str:
    flag = int(proc.effective[i])
    x, y, w, h = (int(v) for v in proc.boxes[i])
    eff = "-" if flag < 0 else str(flag)
    return f"{i} {float(proc.t_seconds[i])!r} {int(proc.phases[i])} {eff} {x} {y} {w} {h}"


def write_procedure(proc: SyntheticProcedure, root: Path) -> ProcedureEntry:
    """Write one procedure directory atomically (staged, then renamed into place)."""
    root = Path(root)
    data = _frames_bytes(proc.images)
    stage = data_manager.stage_directory(root, proc.id)
    try:
        data_manager.atomic_write(stage / data_manager.FRAMES_NAME, lambda fs: fs.write(data))
        lines = [LABELS_HEADER] + [_format_label_line(proc, i) for i in range(len(proc))]
        data_manager.atomic_write(stage / data_manager.LABELS_NAME, lambda fs: fs.write("\n".join(lines) + "\n"), binary=False)
        data_manager.commit_directory(stage, data_manager.procedure_dir(root, proc.id))
    except BaseException:
        safe_delete(stage)
        raise
    return ProcedureEntry(
        id=proc.id,
        n_frames=len(proc),
        effective_case=proc.effective_case,
        height=proc.height,
        width=proc.width,
        frames_xxh64=xxhash.xxh64_hexdigest(data),
    )


def write_dataset(
    procedures: Sequence[SyntheticProcedure],
    root: Path,
    *,
    generator: Optional[GeneratorParams] = None,
    splits: Optional[dict[str, list[str]]] = None,
    workers: int = 4,
) -> DatasetManifest:
    """Write procedures plus ``manifest.json`` under ``root``.

    Parameters
    ----------
    procedures : Sequence[SyntheticProcedure]
        In the order they should be listed; default splits follow this order.
    root : Path
        Dataset directory, created if missing.
    generator : Optional[GeneratorParams]
        Recorded in the manifest for provenance.
    splits : Optional[dict]
        Overrides :func:`default_splits`.
    workers : int
        Concurrent procedure writers.

    Returns
    -------
    DatasetManifest
        The manifest that was written.

    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    entries = run_threaded((lambda p=p: write_procedure(p, root) for p in procedures), limit=workers)
    return _write_manifest(root, entries, generator=generator, splits=splits)


def _write_manifest(
    root: Path,
    entries: list[ProcedureEntry],
    *,
    generator: Optional[GeneratorParams],
    splits: Optional[dict[str, list[str]]],
) -> DatasetManifest:
    ids = [e.id for e in entries]
    manifest = DatasetManifest(
        pmnet_version=__version__,
        generator=generator.dict() if generator is not None else None,
        procedures=entries,
        splits=splits if splits is not None else default_splits(ids),
    )
    data_manager.save_json(data_manager.manifest_path(root), manifest.dict())
    log.info("Wrote {} procedures to {}", len(entries), root)
    return manifest


def read_manifest(root: Path) -> DatasetManifest:
    path = data_manager.manifest_path(root)
    raw = data_manager.load_json(path)
    try:
        manifest = DatasetManifest.parse_obj(raw)
    except ValidationError as e:
        raise DatasetFormatError(path, f"invalid manifest ({e.errors()[0]['msg']})") from e
    if manifest.format != MANIFEST_FORMAT:
        raise DatasetFormatError(path, f"unsupported manifest format {manifest.format} (expected {MANIFEST_FORMAT})")
    try:
        written_by = VersionInfo.from_str(manifest.pmnet_version)
    except ValueError as e:
        raise DatasetFormatError(path, f"unreadable pmnet_version {manifest.pmnet_version!r}") from e
    if not version_info.is_compatible_with(written_by):
        raise DatasetFormatError(path, f"written by pmnet {written_by}, incompatible with {version_info}")
    unknown = set(manifest.splits) - set(SPLITS)
    if unknown:
        raise DatasetFormatError(path, f"unknown splits {sorted(unknown)}")
    return manifest


def _file_xxh64(path: Path) -> str:
    hasher = xxhash.xxh64()
    with path.open("rb") as fs:
        while chunk := fs.read(_HASH_CHUNK):
            hasher.update(chunk)
    return hasher.hexdigest()


def _read_frames(path: Path, entry: ProcedureEntry, *, verify: bool) -> np.ndarray:
    if not path.is_file():
        raise DatasetFormatError(path, "file is missing")
    size = path.stat().st_size
    if size < HEADER.size:
        raise DatasetFormatError(path, f"truncated header ({size} bytes)")
    with path.open("rb") as fs:
        magic, h, w, c, n = HEADER.unpack(fs.read(HEADER.size))
    if magic != FRAMES_MAGIC:
        raise DatasetFormatError(path, f"bad magic {magic!r}")
    expected = HEADER.size + n * h * w * c * 4
    if size != expected:
        raise DatasetFormatError(path, f"tensor length mismatch: header promises {expected} bytes, file has {size}")
    if (n, h, w) != (entry.n_frames, entry.height, entry.width):
        raise DatasetFormatError(path, f"shape {(n, h, w)} disagrees with manifest {(entry.n_frames, entry.height, entry.width)}")
    if verify and _file_xxh64(path) != entry.frames_xxh64:
        raise DatasetFormatError(path, "checksum mismatch")
    if n == 0:
        return np.zeros((0, h, w, c), dtype="<f4")
    return np.memmap(path, dtype="<f4", mode="r", offset=HEADER.size, shape=(n, h, w, c))


def _read_labels(path: Path, n_frames: int) -> tuple[np.ndarray, ...]:
    if not path.is_file():
        raise DatasetFormatError(path, "file is missing")
    rows = [line for line in path.read_text(encoding="utf-8").splitlines() if line.strip() and not line.startswith("#")]
    if len(rows) != n_frames:
        raise DatasetFormatError(path, f"{len(rows)} label records for {n_frames} frames")

    phases = np.empty(n_frames, dtype=np.int64)
    effective = np.empty(n_frames, dtype=np.int8)
    boxes = np.empty((n_frames, 4), dtype=np.int64)
    t_seconds = np.empty(n_frames, dtype=np.float64)
    for lineno, row in enumerate(rows):
        fields = row.split()
        try:
            if len(fields) != 8:
                msg = f"expected 8 fields, got {len(fields)}"
                raise ValueError(msg)
            if int(fields[0]) != lineno:
                msg = f"frame index {fields[0]} out of order"
                raise ValueError(msg)
            t_seconds[lineno] = float(fields[1])
            phases[lineno] = int(PhaseLabel(int(fields[2])))
            effective[lineno] = -1 if fields[3] == "-" else int(fields[3])
            boxes[lineno] = [int(v) for v in fields[4:]]
        except ValueError as e:
            raise DatasetFormatError(path, f"record {lineno}: {e}") from None
    return phases, effective, boxes, t_seconds


def read_procedure(root: Path, entry: ProcedureEntry, *, verify: bool = True) -> SyntheticProcedure:
    folder = data_manager.procedure_dir(root, entry.id)
    images = _read_frames(folder / data_manager.FRAMES_NAME, entry, verify=verify)
    phases, effective, boxes, t_seconds = _read_labels(folder / data_manager.LABELS_NAME, entry.n_frames)
    return SyntheticProcedure(
        id=entry.id,
        images=images,
        phases=phases,
        effective=effective,
        boxes=boxes,
        t_seconds=t_seconds,
        effective_case=entry.effective_case,
    )


def read_dataset(root: Path, split: Optional[str] = None, *, verify: bool = True) -> list[SyntheticProcedure]:
    """Load every procedure (or one split) listed in the manifest under ``root``.

    Frames are memory-mapped, so large datasets are only paged in as windows touch them.

    Raises
    ------
    DatasetFormatError
        Naming the offending file when anything is missing or corrupt.

    """
    root = Path(root)
    manifest = read_manifest(root)
    if split is None:
        entries = manifest.procedures
    else:
        wanted = manifest.split_ids(split)
        try:
            entries = [manifest.entry(pid) for pid in wanted]
        except KeyError as e:
            raise DatasetFormatError(data_manager.manifest_path(root), f"split {split!r} lists unknown procedure {e.args[0]!r}") from None
    return [read_procedure(root, entry, verify=verify) for entry in entries]


def generate_dataset(params: GeneratorParams, root: Path, *, workers: int = 4) -> DatasetManifest:
    """Generate and write procedure by procedure, so only ``workers`` procedures are ever in memory."""
    params.check()
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    ineffective = ineffective_indices(params)

    def _one(index: int) -> ProcedureEntry:
        return write_procedure(generate_procedure(params, index, ineffective=ineffective), root)

    entries = run_threaded((lambda i=i: _one(i) for i in range(params.n_procedures)), limit=workers)
    return _write_manifest(root, entries, generator=params, splits=None)
