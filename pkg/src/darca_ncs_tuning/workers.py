"""
workers.py

Ordered parallel map used for population and replicate evaluation.
Results come back in input order, so any reduction over them is
independent of the worker count.
"""

import multiprocessing
from typing import Callable, Iterable, List

from darca_log_facility.logger import DarcaLogger

# Initialize the logger
logger = DarcaLogger(name="workers").get_logger()


def parallel_map(func: Callable, items: Iterable, jobs: int = 1) -> List:
    """
    Apply *func* to every item, on up to *jobs* processes.

    Args:
        func (Callable): Picklable callable when jobs > 1.
        items (Iterable): Inputs.
        jobs (int): Worker cap; 1 or less evaluates in-process.

    Returns:
        list: ``[func(item) for item in items]`` in input order.
    """
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    workers = min(jobs, len(items))
    logger.debug(f"Evaluating {len(items)} items on {workers} workers")
    with multiprocessing.Pool(processes=workers) as pool:
        return pool.map(func, items)
