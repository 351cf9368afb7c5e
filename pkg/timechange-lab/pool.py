"""
Worker fan-out for per-path Monte Carlo work.

Tasks are keyed by path index, executed in chunks on a process pool and
gathered back in index order, so results never depend on the worker count.

:copyright: (c) 2026 Time-change lab contributors
:license: Mozilla Public License Version 2.0, see LICENSE for more details.
"""

import asyncio
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Sequence

from const import WORKERS_ENV
from errors import InvalidArgumentError

_LOG = logging.getLogger(__name__)

_CHUNKS_PER_WORKER = 4


def default_workers() -> int:
    """Worker count from TCLAB_WORKERS, else 1."""
    raw = os.getenv(WORKERS_ENV, "1")
    try:
        value = int(raw)
    except ValueError as ex:
        raise InvalidArgumentError(f"{WORKERS_ENV}={raw!r} is not an integer") from ex
    return max(value, 1)


def _run_chunk(fn: Callable[[Any], Any], tasks: Sequence[Any]) -> list[Any]:
    return [fn(task) for task in tasks]


def _chunks(tasks: Sequence[Any], workers: int) -> list[Sequence[Any]]:
    size = max(1, -(-len(tasks) // (workers * _CHUNKS_PER_WORKER)))
    return [tasks[i:i + size] for i in range(0, len(tasks), size)]


async def _gather_chunks(fn: Callable[[Any], Any], tasks: Sequence[Any], workers: int) -> list[Any]:
    loop = asyncio.get_running_loop()
    chunks = _chunks(tasks, workers)
    with ProcessPoolExecutor(max_workers=workers) as executor:
        results = await asyncio.gather(
            *(loop.run_in_executor(executor, _run_chunk, fn, chunk) for chunk in chunks),
            return_exceptions=True,
        )

    failures = []
    for index, result in enumerate(results):
        if isinstance(result, Exception):
            _LOG.warning("Chunk %d of %d failed: %s", index + 1, len(chunks), result)
            failures.append(result)
    if failures:
        raise failures[0]
    return [item for chunk in results for item in chunk]


def map_indexed(fn: Callable[[Any], Any], tasks: Sequence[Any], workers: int = 1) -> list[Any]:
    """
    Apply a picklable top-level function to every task, results in task order.

    Args:
        fn: Function of one task.
        tasks: Per-path work items.
        workers: Process count; 1 runs inline in this process.

    Returns:
        fn(task) for every task, in order.
    """
    if workers < 1:
        raise InvalidArgumentError(f"workers must be at least 1, got {workers}")
    if workers == 1 or len(tasks) < 2:
        return _run_chunk(fn, tasks)
    _LOG.debug("Fanning %d tasks out to %d workers", len(tasks), workers)
    return asyncio.run(_gather_chunks(fn, list(tasks), workers))
