from __future__ import annotations

import io
from pathlib import Path
from typing import Any, Optional

import torch
from loguru import logger as log

from pmnet import VersionInfo, __version__, version_info
from pmnet.core.config import make_config
from pmnet.core.data_manager import atomic_write
from pmnet.core.errors import CheckpointError, ConfigError
from pmnet.network.model import PmNet

__all__ = ["save_checkpoint", "read_checkpoint", "load_checkpoint", "last_checkpoint_path"]


def last_checkpoint_path(path: Path) -> Path:
    """``best.pt`` -> ``best.last.pt``"""
    path = Path(path)
    return path.with_name(f"{path.stem}.last{path.suffix}")


def save_checkpoint(
    path: Path,
    model: PmNet,
    *,
    optimizer: Optional[torch.optim.Optimizer] = None,
    epoch: int = 0,
    history: Optional[list[dict[str, Any]]] = None,
    best_jaccard: Optional[float] = None,
) -> None:
    state = {
        "pmnet_version": __version__,
        "config": model.config.dict(),
        "model": model.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "epoch": epoch,
        "torch_rng": torch.get_rng_state(),
        "history": history or [],
        "best_jaccard": best_jaccard,
    }
    buffer = io.BytesIO()
    torch.save(state, buffer)
    payload = buffer.getvalue()
    atomic_write(Path(path), lambda fs: fs.write(payload))
    log.debug("Checkpoint for epoch {} written to {}", epoch, path)


def read_checkpoint(path: Path) -> dict[str, Any]:
    """Load the raw checkpoint dict after checking it was written by a compatible version.

    Raises
    ------
    CheckpointError
        Missing or unreadable file, or an incompatible major version.

    """
    path = Path(path)
    if not path.is_file():
        msg = f"checkpoint {path} does not exist"
        raise CheckpointError(msg)
    try:
        state = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        msg = f"checkpoint {path} is unreadable: {e}"
        raise CheckpointError(msg) from e
    if not isinstance(state, dict) or "model" not in state or "config" not in state:
        msg = f"checkpoint {path} is missing model or config entries"
        raise CheckpointError(msg)
    try:
        written_by = VersionInfo.from_str(str(state.get("pmnet_version")))
    except ValueError as e:
        msg = f"checkpoint {path} has no readable version"
        raise CheckpointError(msg) from e
    if not version_info.is_compatible_with(written_by):
        msg = f"checkpoint {path} was written by pmnet {written_by}, incompatible with {version_info}"
        raise CheckpointError(msg)
    return state


def load_checkpoint(path: Path) -> tuple[PmNet, dict[str, Any]]:
    """Rebuild the model (prototype bank included) in inference mode."""
    state = read_checkpoint(path)
    try:
        config = make_config(state["config"])
    except ConfigError as e:
        msg = f"checkpoint {path} holds an invalid config: {e}"
        raise CheckpointError(msg) from e
    model = PmNet.from_config(config)
    try:
        model.load_state_dict(state["model"])
    except RuntimeError as e:
        msg = f"checkpoint {path} does not match its config: {e}"
        raise CheckpointError(msg) from e
    model.eval()
    return model, state
