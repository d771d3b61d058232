from __future__ import annotations

import re as _re
import warnings as _warnings
from typing import NamedTuple as _NamedTuple

__all__ = ["__version__", "version_info", "VersionInfo"]

_VERSION_PATTERN = _re.compile(r"^(0|[1-9]\d*)\.(0|[1-9]\d*)\.(0|[1-9]\d*)$")


class VersionInfo(_NamedTuple):
    """Release number stamped into dataset manifests and checkpoints."""

    major: int
    minor: int
    micro: int

    @classmethod
    def from_str(cls, version_str: str) -> VersionInfo:
        """Parse ``major.minor.micro``.

        Raises
        ------
        ValueError
            If the version string is malformed.

        """
        match = _VERSION_PATTERN.match(version_str.strip())
        if not match:
            msg = f"Invalid version string: {version_str}"
            raise ValueError(msg)
        return cls(*map(int, match.groups()))

    def is_compatible_with(self, other: VersionInfo) -> bool:
        """Files are readable across minor versions only."""
        return self.major == other.major

    def __str__(self) -> str:
        return f"{self.major}.{self.minor}.{self.micro}"


__version__ = "1.0.0"
version_info = VersionInfo.from_str(__version__)
_warnings.filterwarnings("ignore", category=UserWarning, module=r"torch\.utils\.data.*")
