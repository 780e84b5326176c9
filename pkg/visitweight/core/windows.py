"""Module with the visit-window classification of inter-visit gaps.

Each gap ``g`` (months) after a visit with recommended interval ``R`` is
classified, on the month scale, as::

    very early   g <  R - 1
    early        R - 1   <= g <  R - 0.5
    in-window    otherwise
    late         1.5 R   <  g <= 2 R
    very late    g >  2 R

and its duration is split into the time spent at risk of each category.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, NamedTuple, Optional

from visitweight.core.exceptions import WindowPolicyError

__all__ = ('Interval', 'RiskDecomposition', 'VisitCategory', 'WindowPolicy',
           'category_boundaries', 'classify_gap', 'decompose_risk')

LOG = logging.getLogger(__name__)


class VisitCategory(Enum):
    """Visit categories, in the order they are traversed on the gap axis."""

    VERY_EARLY = 'very_early'
    EARLY = 'early'
    IN_WINDOW = 'in_window'
    LATE = 'late'
    VERY_LATE = 'very_late'

    def __str__(self):
        return self.value

    @property
    def is_out_of_window(self):
        """Return True for every category but in-window."""
        return self is not VisitCategory.IN_WINDOW

    @property
    def is_early(self):
        """Return True for early and very early."""
        return self in (VisitCategory.VERY_EARLY, VisitCategory.EARLY)

    @property
    def is_late(self):
        """Return True for late and very late."""
        return self in (VisitCategory.LATE, VisitCategory.VERY_LATE)


CATEGORIES = tuple(VisitCategory)


@dataclass(frozen=True)
class WindowPolicy:
    """Thresholds of the visit windows.

    Attributes:
        very_early_offset (float): months before R below which a visit is
            very early.
        early_offset (float): months before R below which a visit is early.
        late_factor (float): multiple of R above which a visit is late.
        very_late_factor (float): multiple of R above which a visit is very
            late.
    """

    very_early_offset: float = 1.0
    early_offset: float = 0.5
    late_factor: float = 1.5
    very_late_factor: float = 2.0

    def __post_init__(self):
        """Validate threshold ordering."""
        if not 0 < self.early_offset < self.very_early_offset:
            raise WindowPolicyError(
                'window offsets must satisfy 0 < early_offset < '
                f'very_early_offset, got {self.early_offset} and '
                f'{self.very_early_offset}')
        if not 1 < self.late_factor < self.very_late_factor:
            raise WindowPolicyError(
                'window factors must satisfy 1 < late_factor < '
                f'very_late_factor, got {self.late_factor} and '
                f'{self.very_late_factor}')


class Interval(NamedTuple):
    """An interval of gap time in months."""

    lower: float
    upper: float
    lower_closed: bool = True
    upper_closed: bool = False

    def contains(self, value):
        """Return True if *value* lies in the interval."""
        above = value >= self.lower if self.lower_closed else \
            value > self.lower
        below = value <= self.upper if self.upper_closed else \
            value < self.upper
        return above and below

    def overlap(self, exposure):
        """Return the length of the overlap with ``[0, exposure]``."""
        return max(0.0, min(exposure, self.upper) - self.lower)


def _check_positive(name, value):
    if value is None or not value > 0:
        raise WindowPolicyError(f'{name} must be positive, got {value}')


def category_boundaries(rec_interval, policy=None):
    """Return the gap-time interval of every category for a given R.

    Args:
        rec_interval (float): recommended interval R in months.
        policy (WindowPolicy): thresholds.

    Returns:
        dict: VisitCategory -> :class:`Interval`, or None when the
        interval is empty.

    """
    policy = policy or WindowPolicy()
    _check_positive('recommended interval', rec_interval)
    very_early_end = rec_interval - policy.very_early_offset
    early_end = rec_interval - policy.early_offset
    late_start = policy.late_factor * rec_interval
    very_late_start = policy.very_late_factor * rec_interval

    boundaries = {category: None for category in CATEGORIES}
    if very_early_end > 0:
        boundaries[VisitCategory.VERY_EARLY] = Interval(0.0, very_early_end)
    if early_end > 0:
        boundaries[VisitCategory.EARLY] = Interval(max(very_early_end, 0.0),
                                                   early_end)
    boundaries[VisitCategory.IN_WINDOW] = Interval(
        max(early_end, 0.0), late_start, upper_closed=True)
    boundaries[VisitCategory.LATE] = Interval(
        late_start, very_late_start, lower_closed=False, upper_closed=True)
    boundaries[VisitCategory.VERY_LATE] = Interval(
        very_late_start, float('inf'), lower_closed=False)
    return boundaries


def classify_gap(gap, rec_interval, policy=None):
    """Return the category of a gap.

    Args:
        gap (float): observed gap g in months.
        rec_interval (float): recommended interval R in months.
        policy (WindowPolicy): thresholds.

    Returns:
        VisitCategory: the unique category whose window contains g.

    """
    policy = policy or WindowPolicy()
    _check_positive('gap', gap)
    _check_positive('recommended interval', rec_interval)
    if gap < rec_interval - policy.very_early_offset:
        return VisitCategory.VERY_EARLY
    if gap < rec_interval - policy.early_offset:
        return VisitCategory.EARLY
    if gap <= policy.late_factor * rec_interval:
        return VisitCategory.IN_WINDOW
    if gap <= policy.very_late_factor * rec_interval:
        return VisitCategory.LATE
    return VisitCategory.VERY_LATE


@dataclass(frozen=True)
class RiskDecomposition:
    """Time at risk of each category during one gap.

    Attributes:
        durations (dict): VisitCategory -> positive months; categories with
            no time at risk are left out.
        event_category (VisitCategory): category of the visit that ended
            the gap, None when the gap is censored or invalid.
        valid (bool): False when R is missing.
    """

    durations: Dict[VisitCategory, float]
    event_category: Optional[VisitCategory] = None
    valid: bool = True

    def duration(self, category):
        """Return the time at risk of *category*, None when absent."""
        return self.durations.get(category)

    @property
    def total(self):
        """Return the total time at risk."""
        return sum(self.durations.values())


INVALID = RiskDecomposition(durations={}, event_category=None, valid=False)


def decompose_risk(exposure, rec_interval, censored=False, policy=None):
    """Split a gap into time at risk per category.

    Args:
        exposure (float): gap length, or time to study end when censored.
        rec_interval (float): recommended interval R, None when missing.
        censored (bool): True when the gap ends without a visit.
        policy (WindowPolicy): thresholds.

    Returns:
        RiskDecomposition: per-category durations and event category.

    """
    policy = policy or WindowPolicy()
    if rec_interval is None:
        return INVALID
    _check_positive('exposure', exposure)
    boundaries = category_boundaries(rec_interval, policy)
    durations = {}
    for category in CATEGORIES:
        interval = boundaries[category]
        if interval is None:
            continue
        length = interval.overlap(exposure)
        if length > 0:
            durations[category] = length
    event = None if censored else classify_gap(exposure, rec_interval, policy)
    return RiskDecomposition(durations=durations, event_category=event)
