from __future__ import annotations

from collections.abc import Iterable, Mapping
from pathlib import Path
from typing import Any, Optional

from loguru import logger as log
from pydantic import ValidationError

from pmnet.core.data_manager import atomic_write
from pmnet.core.errors import ConfigError
from pmnet.models.run import RunConfig

__all__ = ["parse_config_text", "load_config", "make_config", "dump_config", "format_config", "iter_diff"]


def _describe(e: ValidationError) -> str:
    return "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())


def _unquote(value: str) -> str:
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        return value[1:-1]
    return value


def parse_config_text(text: str, *, source: str = "<config>") -> dict[str, str]:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            msg = f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}"
            raise ConfigError(msg)
        if key in values:
            msg = f"{source}:{lineno}: duplicate key {key!r}"
            raise ConfigError(msg)
        values[key] = _unquote(value.strip())
    return values


def make_config(values: Optional[Mapping[str, Any]] = None, **overrides: Any) -> RunConfig:
    """Build a validated RunConfig, turning pydantic errors into ConfigError."""
    merged = {**(values or {}), **overrides}
    try:
        return RunConfig(**merged)
    except ValidationError as e:
        msg = f"invalid run configuration: {_describe(e)}"
        raise ConfigError(msg) from None


def load_config(path: Optional[Path], overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """Read a run config file, then apply ``overrides`` on top.

    Parameters
    ----------
    path : Optional[Path]
        Config file; ``None`` means defaults only.
    overrides : Optional[Mapping[str, Any]]
        Values that win over the file, e.g. from ``--set key=value``.

    Raises
    ------
    ConfigError
        Unreadable file, malformed line, unknown key or invalid value.

    """
    values: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            msg = f"cannot read config {path}: {e.strerror}"
            raise ConfigError(msg) from None
        values = parse_config_text(text, source=str(path))
        log.debug("Loaded {} config keys from {}", len(values), path)
    if overrides:
        values.update(overrides)
    return make_config(values)


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return f'"{value}"' if value == "" or value != value.strip() else value
    return repr(value)


def format_config(config: RunConfig) -> str:
    return "".join(f"{key} = {_format_value(value)}\n" for key, value in config.dict().items())


def dump_config(config: RunConfig, path: Path) -> None:
    text = format_config(config)
    atomic_write(Path(path), lambda fs: fs.write(text), binary=False)


def iter_diff(a: RunConfig, b: RunConfig) -> Iterable[tuple[str, Any, Any]]:
    """Fields whose values differ between two configs, in declaration order."""
    da, db = a.dict(), b.dict()
    return ((k, da[k], db[k]) for k in da if da[k] != db[k])
