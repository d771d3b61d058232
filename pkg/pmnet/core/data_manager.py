from __future__ import annotations

import os
from collections.abc import Callable
from pathlib import Path
from typing import IO, Any
from uuid import uuid4

import ujson

from pmnet.core.errors import DatasetFormatError
from pmnet.core.utils._internal_utils import safe_delete

__all__ = [
    "MANIFEST_NAME",
    "FRAMES_NAME",
    "LABELS_NAME",
    "manifest_path",
    "procedure_dir",
    "save_json",
    "load_json",
    "atomic_write",
    "stage_directory",
    "commit_directory",
]

MANIFEST_NAME = "manifest.json"
FRAMES_NAME = "frames.bin"
LABELS_NAME = "labels.txt"


def manifest_path(root: Path) -> Path:
    return Path(root) / MANIFEST_NAME


def procedure_dir(root: Path, procedure_id: str) -> Path:
    return Path(root) / procedure_id


def _fsync_dir(path: Path) -> None:
    try:
        flag = os.O_DIRECTORY  # pylint: disable=no-member
    except AttributeError:
        return
    fd = os.open(path, flag)
    try:
        os.fsync(fd)
    finally:
        os.close(fd)


def atomic_write(path: Path, writer: Callable[[IO[Any]], None], *, binary: bool = True) -> None:
    """Write ``path`` through a temp file, then replace.

    Without the fsync on both the temp file, and after the replace on the directory,
    there's no real durability or atomicity guarantee from the filesystem.

    In depth overview of underlying reasons why this is needed:
        https://lwn.net/Articles/457667/

    """
    path = Path(path)
    tmp_path = path.parent / f"{path.stem}-{uuid4().fields[0]}.tmp"
    mode = "wb" if binary else "w"
    kwargs = {} if binary else {"encoding": "utf-8"}
    with tmp_path.open(mode, **kwargs) as fs:
        writer(fs)
        fs.flush()  # This does get closed on context exit, ...
        os.fsync(fs.fileno())  # but that needs to happen prior to this line

    tmp_path.replace(path)
    _fsync_dir(path.parent)


def save_json(path: Path, data: dict[str, Any]) -> None:
    atomic_write(path, lambda fs: ujson.dump(data, fs, indent=2, escape_forward_slashes=False), binary=False)


def load_json(path: Path) -> dict[str, Any]:
    path = Path(path)
    try:
        with path.open(encoding="utf-8") as fs:
            data = ujson.load(fs)
    except FileNotFoundError:
        raise DatasetFormatError(path, "file is missing") from None
    except ValueError as e:
        raise DatasetFormatError(path, f"invalid JSON ({e})") from e
    if not isinstance(data, dict):
        raise DatasetFormatError(path, f"invalid top-level structure (expected dict, got {type(data).__name__})")
    return data


def stage_directory(root: Path, name: str) -> Path:
    """Create an empty hidden sibling of ``root / name`` to write into."""
    stage = Path(root) / f".{name}-{uuid4().hex[:8]}.tmp"
    stage.mkdir(parents=True)
    return stage


def commit_directory(stage: Path, final: Path) -> None:
    """Move a fully written staging directory into place, replacing ``final``."""
    if final.exists():
        safe_delete(final)
    stage.rename(final)
    _fsync_dir(final.parent)
