"""Bounded local worker pool with order-preserving maps.

Results always come back in submission order, so anything merged from them
is independent of the worker count and of scheduling.
"""

from __future__ import annotations

import logging
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Sequence

log = logging.getLogger(__name__)

WORKERS_ENV = "MOLELAB_WORKERS"


def resolve_workers(requested: int | None = None) -> int:
    """Worker count: the environment override, else ``requested``, else the CPU count."""
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    elif requested is not None:
        n = int(requested)
    else:
        n = os.cpu_count() or 1
    if n < 1:
        raise ValueError(f"worker count must be >= 1, got {n}")
    return n


@dataclass(frozen=True)
class Failure:
    """Returned in place of a result when a task raises."""

    error: str
    detail: str = ""


def _guarded(fn, args):
    try:
        return fn(*args)
    except Exception as exc:
        return Failure(f"{type(exc).__name__}: {exc}", traceback.format_exc())


def _guarded_star(item):
    fn, args = item
    return _guarded(fn, args)


class WorkerPool:
    """Process pool, or an in-process loop when ``workers == 1``.

    Use as a context manager; tasks and callables must be picklable when
    ``workers > 1``.
    """

    def __init__(self, workers: int | None = None):
        self.workers = resolve_workers(workers)
        self._executor: ProcessPoolExecutor | None = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self):
        if self._executor is not None:
            self._executor.shutdown(wait=True, cancel_futures=True)
            self._executor = None

    def _pool(self) -> ProcessPoolExecutor:
        if self._executor is None:
            self._executor = ProcessPoolExecutor(max_workers=self.workers)
        return self._executor

    def starmap(self, fn: Callable, arg_tuples: Sequence[tuple]) -> list[Any]:
        """``[fn(*a) for a in arg_tuples]``; a raising task yields a :class:`Failure`."""
        arg_tuples = list(arg_tuples)
        if self.workers == 1 or len(arg_tuples) <= 1:
            return [_guarded(fn, a) for a in arg_tuples]
        chunk = max(1, math.ceil(len(arg_tuples) / (4 * self.workers)))
        return list(self._pool().map(_guarded_star, [(fn, a) for a in arg_tuples], chunksize=chunk))


_SERIAL = WorkerPool.__new__(WorkerPool)
_SERIAL.workers = 1
_SERIAL._executor = None


def serial_pool() -> WorkerPool:
    """An in-process pool that ignores the environment override."""
    return _SERIAL
