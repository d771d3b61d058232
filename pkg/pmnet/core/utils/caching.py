from __future__ import annotations

import collections
from collections.abc import Hashable
from typing import Generic, TypeVar

_K = TypeVar("_K", bound=Hashable)
_V = TypeVar("_V")


class LRUDict(Generic[_K, _V]):
    """Frame-indexed feature cache with least-recently-used eviction.

    The online recognizer keeps one entry per encoded frame in here, so every
    frame passes through the encoder exactly once while the window only ever
    looks back a bounded number of frames. ``evictions`` counts dropped frames
    since the last :meth:`clear`.

    Strided windows must read through :meth:`peek`: frames are inserted in index
    order, so without refreshes the oldest frame index is always evicted first.

    """

    def __init__(self, *, size: int) -> None:
        if size <= 0:
            msg = "size must be positive"
            raise ValueError(msg)
        self.size = size
        self.evictions = 0
        self._dict: collections.OrderedDict[_K, _V] = collections.OrderedDict()

    def __contains__(self, key: _K) -> bool:
        return key in self._dict

    def __getitem__(self, key: _K) -> _V:
        value = self._dict[key]
        self._dict.move_to_end(key)
        return value

    def peek(self, key: _K) -> _V:
        """Read ``key`` without touching its eviction order."""
        return self._dict[key]

    def __setitem__(self, key: _K, value: _V) -> None:
        self._dict[key] = value
        self._dict.move_to_end(key)
        while len(self._dict) > self.size:
            self._dict.popitem(last=False)
            self.evictions += 1

    def __len__(self) -> int:
        return len(self._dict)

    def clear(self) -> None:
        self.evictions = 0
        self._dict.clear()
