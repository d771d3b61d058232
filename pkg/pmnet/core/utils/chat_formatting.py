from __future__ import annotations

from collections.abc import Sequence
from typing import Any, Optional, Union

from babel.numbers import format_decimal
from tabulate import tabulate

UNDEFINED = "n/a"


def humanize_number(val: Union[int, float], locale: str = "en_US") -> str:
    """Digit-grouped rendering of counts for log lines, e.g. ``1,234,567``."""
    return format_decimal(val, locale=locale)


def format_value(value: Optional[float], digits: int = 2) -> str:
    return UNDEFINED if value is None else f"{value:.{digits}f}"


def render_table(rows: Sequence[Sequence[Any]], headers: Sequence[str], *, digits: int = 2) -> str:
    """Render rows as a plain-text table, printing undefined cells as ``n/a``."""
    cells = [[format_value(c, digits) if c is None or isinstance(c, float) else c for c in row] for row in rows]
    return tabulate(cells, headers=list(headers), tablefmt="simple", disable_numparse=True)
