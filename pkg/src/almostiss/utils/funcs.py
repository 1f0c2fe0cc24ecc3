from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Callable, List, Optional, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

__all__ = ["chunk_slices", "chunked_map"]


def chunk_slices(total: int, chunk_size: int) -> List[slice]:
    """Split range(total) into consecutive slices of at most chunk_size."""
    if chunk_size < 1:
        raise ValueError("chunk_size must be positive")
    return [slice(start, min(start + chunk_size, total)) for start in range(0, total, chunk_size)]


def chunked_map(
    fn: Callable[[T], R],
    items: Sequence[T],
    max_workers: Optional[int] = None,
) -> List[R]:
    """
    Apply fn to every item on a thread pool and return results in input order.

    Results are collected with as_completed and re-sorted by index, so the
    output never depends on scheduling.
    """
    if not items:
        return []
    if max_workers is None:
        max_workers = min(8, max(1, len(items)))
    if max_workers == 1 or len(items) == 1:
        return [fn(item) for item in items]

    results = []
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        future_to_index = {executor.submit(fn, item): i for i, item in enumerate(items)}
        for future in as_completed(future_to_index):
            results.append((future_to_index[future], future.result()))

    results.sort(key=lambda x: x[0])
    return [result for _, result in results]
