"""Utilities functions used in visitweight."""
from concurrent.futures import ThreadPoolExecutor
from datetime import date, datetime

import numpy as np

__all__ = ['float_range', 'get_date', 'parallel_map']


def parallel_map(function, items, jobs=1):
    """Apply *function* to every item, optionally on a thread pool.

    Results are always returned in the order of *items*, so the outcome does
    not depend on the number of workers.

    Args:
        function (callable): function of one argument.
        items (iterable): arguments.
        jobs (int): number of worker threads; 1 runs inline.

    Returns:
        list: function(item) for each item, in input order.

    """
    items = list(items)
    if jobs is None or jobs <= 1 or len(items) <= 1:
        return [function(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(function, items))


def float_range(start, stop, step):
    """Return the grid start, start + step, ... up to stop (inclusive).

    Same points as R's ``seq(start, stop, by=step)``; each point is computed
    as ``start + k * step`` so grids never accumulate rounding drift.

    Args:
        start (float): first point.
        stop (float): last point (included when on the grid).
        step (float): positive spacing.

    Returns:
        numpy.ndarray: the grid.

    """
    if step <= 0:
        raise ValueError(f'step must be positive, got {step}')
    if stop < start:
        raise ValueError(f'stop ({stop}) is before start ({start})')
    count = int(np.floor((stop - start) / step + 1e-10)) + 1
    return start + step * np.arange(count)


def get_date(data=None):
    """Receive a string or a date and return a :class:`datetime.date`.

    data = "2009-05-13"

    or

    data = "2009-05-13T10:30:00"

    Args:
        data (str, date): ISO-8601 text or date instance.

    Returns:
        date: the date, or None for empty input.

    """
    if data is None:
        return None
    if isinstance(data, datetime):
        return data.date()
    if isinstance(data, date):
        return data
    text = str(data).strip()
    if not text:
        return None
    if 'T' in text:
        return datetime.strptime(text, "%Y-%m-%dT%H:%M:%S").date()
    return date.fromisoformat(text)
