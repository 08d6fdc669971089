from concurrent.futures import ProcessPoolExecutor
from typing import Callable, TypeVar

from loguru import logger

import lab.core.config as cfg

R = TypeVar("R")


def chunk_bounds(total: int, chunk_size: int) -> list[tuple[int, int]]:
    """Split sample indices [0, total) into consecutive half-open chunks."""
    if chunk_size < 1:
        raise ValueError(f"chunk size must be positive, got {chunk_size}")
    return [(lo, min(lo + chunk_size, total)) for lo in range(0, total, chunk_size)]


def sample_map(
    fn: Callable[[int, int], R],
    total: int,
    *,
    workers: int = 1,
    chunk_size: int = cfg.CHUNK_SIZE,
) -> list[R]:
    """
    Apply `fn(lo, hi)` to every chunk of sample indices and return the results in chunk order.
    :param fn: picklable callable; must depend only on its arguments so results are worker-independent
    :param total: number of samples
    :param workers: process count; 1 runs inline
    :param chunk_size: samples per task
    """
    bounds = chunk_bounds(total, chunk_size)
    if workers <= 1 or len(bounds) <= 1:
        return [fn(lo, hi) for lo, hi in bounds]
    logger.debug(f"dispatching {len(bounds)} chunks of up to {chunk_size} samples to {workers} workers")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, [b[0] for b in bounds], [b[1] for b in bounds]))
