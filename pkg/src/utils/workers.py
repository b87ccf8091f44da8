"""
Worker-thread sizing shared by generation, preprocessing and evaluation
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from tqdm import tqdm

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

ENV_THREADS = "TSN_THREADS"


def worker_count(default: Optional[int] = None) -> int:
    """Threads to use: $TSN_THREADS when set, else the machine's core count"""
    value = os.environ.get(ENV_THREADS)
    if value:
        try:
            count = int(value)
        except ValueError:
            logger.warning(f"Ignoring non-integer {ENV_THREADS}={value!r}")
        else:
            if count >= 1:
                return count
            logger.warning(f"Ignoring {ENV_THREADS}={value!r}, must be >= 1")
    return default or os.cpu_count() or 1


def ordered_map(
    fn: Callable[[T], R],
    items: Iterable[T],
    workers: Optional[int] = None,
    progress: Optional[str] = None,
) -> List[R]:
    """Map over ``items`` on a thread pool; results keep input order"""
    items = list(items)
    workers = workers or worker_count()
    bar = tqdm(total=len(items), desc=progress, disable=progress is None, leave=False)
    try:
        if workers == 1 or len(items) <= 1:
            results = []
            for item in items:
                results.append(fn(item))
                bar.update(1)
            return results
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = []
            for result in pool.map(fn, items):
                results.append(result)
                bar.update(1)
            return results
    finally:
        bar.close()
