"""Ordered parallel map over independent work items."""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(
    func: Callable[[T], R], items: Iterable[T], workers: int = 1
) -> list[R]:
    """Apply ``func`` to every item and return results in input order.

    Each item must carry its own random stream so the result does not depend
    on ``workers``. With one worker, or a single item, the map runs serially.
    """
    work = list(items)
    if workers <= 1 or len(work) <= 1:
        return [func(item) for item in work]
    logger.debug(f"Mapping {len(work)} items over {workers} threads")
    with ThreadPoolExecutor(max_workers=min(workers, len(work))) as pool:
        return list(pool.map(func, work))
