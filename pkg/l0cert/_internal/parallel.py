import logging
import multiprocessing
from collections.abc import Callable, Sequence

from l0cert.errors import InvalidParameterError

logger = logging.getLogger(__name__)


def parallel_map[T, R](func: Callable[[T], R], items: Sequence[T], *, jobs: int = 1) -> list[R]:
    """Applies `func` to every item, in a process pool when jobs > 1. Results come back in item order."""
    if jobs < 1:
        raise InvalidParameterError(message=f"jobs must be positive, got {jobs}")
    if jobs == 1 or len(items) <= 1:
        return [func(item) for item in items]

    workers = min(jobs, len(items))
    logger.debug("Dispatching %d jobs to %d workers", len(items), workers)
    with multiprocessing.Pool(workers) as pool:
        return pool.map(func, items)
