import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from tqdm import tqdm

from gapflow.errors import ValidationError

logger = logging.getLogger(__name__)

WORKERS_ENV = 'GAPFLOW_WORKERS'

T = TypeVar('T')
R = TypeVar('R')


def worker_count(workers: Optional[int] = None) -> int:
    if workers is None:
        raw = os.environ.get(WORKERS_ENV, '1')
        try:
            workers = int(raw)
        except ValueError:
            raise ValidationError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if workers < 1:
        raise ValidationError(f"parallelism degree must be >= 1, got {workers}")
    return workers


def parallel_map(fn: Callable[[T], R], items: Iterable[T], workers: Optional[int] = None,
                 desc: Optional[str] = None, progress: bool = True) -> List[R]:
    """Order-preserving map over a thread pool."""
    items = list(items)
    workers = worker_count(workers)
    show = progress and desc is not None and sys.stderr.isatty()
    logger.debug("parallel_map %s: %d items on %d workers", desc, len(items), workers)
    if workers == 1 or len(items) <= 1:
        return [fn(x) for x in tqdm(items, desc=desc, disable=not show)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(tqdm(pool.map(fn, items), total=len(items), desc=desc, disable=not show))
