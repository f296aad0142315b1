# MIT License
# Copyright (c) 2024-present Léo Colombaro

"""Concurrent execution of independent, seed-derived trials."""

import asyncio
from collections.abc import Callable
from typing import TypeVar

T = TypeVar("T")


async def gather_trials(fn: Callable[[int], T], count: int, workers: int) -> list[T]:
    """Run ``fn(0) .. fn(count - 1)`` in worker threads.

    At most ``workers`` calls run at once. Results come back in trial order
    whatever the completion order.
    """
    semaphore = asyncio.Semaphore(max(1, workers))

    async def run_one(trial: int) -> T:
        async with semaphore:
            return await asyncio.to_thread(fn, trial)

    return list(await asyncio.gather(*(run_one(t) for t in range(count))))


def map_trials(fn: Callable[[int], T], count: int, workers: int = 1) -> list[T]:
    """Synchronous front for :func:`gather_trials`; sequential when workers is 1."""
    if workers <= 1:
        return [fn(t) for t in range(count)]
    return asyncio.run(gather_trials(fn, count, workers))
