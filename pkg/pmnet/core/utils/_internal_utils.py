from __future__ import annotations

import contextlib
import shutil
import sys
from pathlib import Path

from rich.console import Console
from rich.progress import BarColumn, MofNCompleteColumn, Progress, TextColumn, TimeElapsedColumn, TimeRemainingColumn

__all__ = ("safe_delete", "make_progress")


def safe_delete(pth: Path) -> None:
    """Remove a file or directory tree, making read-only entries writable first."""
    if not pth.exists():
        return
    if pth.is_file():
        pth.unlink(missing_ok=True)
        return
    for entry in (pth, *pth.rglob("*")):
        with contextlib.suppress(OSError):
            entry.chmod(0o700)
    shutil.rmtree(pth, ignore_errors=True)


def make_progress(*, transient: bool = True) -> Progress:
    """Progress bar on stderr, silent when stderr is not a terminal."""
    console = Console(file=sys.stderr)
    return Progress(
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        MofNCompleteColumn(),
        TimeElapsedColumn(),
        TimeRemainingColumn(),
        console=console,
        transient=transient,
        disable=not console.is_terminal,
    )
