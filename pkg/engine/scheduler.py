# engine/scheduler.py

import asyncio
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Iterable, List

logger = logging.getLogger(__name__)


class Scheduler:
    """
    Fans independent work items (grid points, seeds, scan rows) out to a
    process pool and gathers the results in submission order.

    ``fn`` must be picklable: a module-level function or a functools.partial
    of one. With one worker everything runs inline.
    """

    def __init__(self, workers: int = 1):
        if workers < 1:
            raise ValueError(f"workers must be at least 1, got {workers}")
        self.workers = workers

    async def map_async(self, fn: Callable[[Any], Any], items: Iterable[Any]) -> List[Any]:
        items = list(items)
        if self.workers == 1 or len(items) <= 1:
            return [fn(item) for item in items]
        loop = asyncio.get_running_loop()
        with ProcessPoolExecutor(max_workers=min(self.workers, len(items))) as pool:
            logger.debug(f"dispatching {len(items)} items to {self.workers} workers")
            futures = [loop.run_in_executor(pool, fn, item) for item in items]
            return list(await asyncio.gather(*futures))

    def map(self, fn: Callable[[Any], Any], items: Iterable[Any]) -> List[Any]:
        """Blocking wrapper around :meth:`map_async`."""
        items = list(items)
        if self.workers == 1 or len(items) <= 1:
            return [fn(item) for item in items]
        return asyncio.run(self.map_async(fn, items))
