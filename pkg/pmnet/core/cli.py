from __future__ import annotations

import sys
from collections.abc import Iterable
from typing import Any, Optional

import click

from pmnet.models.dataset import SPLITS


def confirm(text: str, default: Optional[bool] = None) -> bool:
    """Ask a yes/no question on the terminal; non-interactive sessions get ``default`` (or no)."""
    if not sys.stdin.isatty():
        return bool(default)
    return click.confirm(text, default=default)


class KeyValue(click.ParamType):
    """``key=value`` pairs for ``--set``; values stay strings and pydantic coerces them."""

    name = "key=value"

    def convert(self, value: Any, param: Optional[click.Parameter], ctx: Optional[click.Context]) -> tuple[str, str]:
        if isinstance(value, tuple):
            return value
        key, sep, raw = str(value).partition("=")
        if not sep or not key.strip():
            self.fail(f"expected key=value, got {value!r}", param, ctx)
        return key.strip(), raw.strip()


def overrides_dict(pairs: Iterable[tuple[str, str]]) -> dict[str, str]:
    return dict(pairs)


split_choice = click.Choice(list(SPLITS))


def non_negative_int(_ctx: Optional[click.Context], _param: Optional[click.Parameter], value: Optional[int]) -> Optional[int]:
    if value is None:
        return value
    if value < 0:
        msg = "The argument has to be a non-negative integer."
        raise click.BadParameter(msg)
    if value > sys.maxsize:
        msg = f"The argument has to be lower than or equal to {sys.maxsize}."
        raise click.BadParameter(msg)
    return value
