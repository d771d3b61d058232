from __future__ import annotations

import asyncio
from asyncio import Semaphore
from collections.abc import Awaitable, Iterable
from typing import Any, Callable, Optional, TypeVar

__all__ = ("bounded_gather", "run_threaded")

_T = TypeVar("_T")


async def _bounded(sem: Semaphore, task: Awaitable[_T]) -> _T:
    async with sem:
        return await task


def bounded_gather(*aws: Awaitable[Any], limit: int = 4, semaphore: Optional[Semaphore] = None) -> Awaitable[list[Any]]:
    """Gather ``aws`` with at most ``limit`` of them in flight.

    Results keep the order of ``aws`` no matter which finishes first.

    Parameters
    ----------
    *aws
        Awaitables to run.
    limit : int
        Concurrency bound, used when no ``semaphore`` is passed.
    semaphore : Optional[asyncio.Semaphore]
        Shared bound across several gathers.

    Raises
    ------
    TypeError
        If ``limit`` is not a positive int.

    """
    if semaphore is None:
        if not isinstance(limit, int) or limit <= 0:
            msg = "limit must be an int > 0"
            raise TypeError(msg)
        semaphore = Semaphore(limit)
    return asyncio.gather(*(_bounded(semaphore, a) for a in aws))


def run_threaded(funcs: Iterable[Callable[[], _T]], *, limit: int = 4) -> list[_T]:
    """Run blocking callables on worker threads, at most ``limit`` at a time.

    With ``limit == 1`` everything runs inline on the calling thread.

    """
    funcs = list(funcs)
    if limit == 1:
        return [f() for f in funcs]

    async def _runner() -> list[_T]:
        return await bounded_gather(*(asyncio.to_thread(f) for f in funcs), limit=limit)

    return asyncio.run(_runner())
