"""
Process pool with an ordered map; runs in-process when parallelism is off
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class WorkerPool:
    """Context manager around ProcessPoolExecutor"""

    def __init__(self, max_workers: int = 1):
        """
        Initialize worker pool

        Args:
            max_workers: Number of worker processes; <= 1 means serial
        """
        self.max_workers = max(1, int(max_workers))
        self._executor: Optional[ProcessPoolExecutor] = None

    @property
    def parallel(self) -> bool:
        return self.max_workers > 1

    def __enter__(self) -> "WorkerPool":
        if self.parallel and self._executor is None:
            self._executor = ProcessPoolExecutor(max_workers=self.max_workers)
            logger.info(f"Started process pool with {self.max_workers} workers")
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()

    def close(self):
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def map(self, fn: Callable[[T], R], items: Iterable[T], chunksize: int = 1) -> List[R]:
        """Apply fn to every item; results keep input order"""
        if self._executor is None:
            return [fn(item) for item in items]
        return list(self._executor.map(fn, items, chunksize=chunksize))


SERIAL = WorkerPool(1)
