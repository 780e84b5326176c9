"""Module with the agreement diagnostics of observed and recommended gaps."""
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional

import numpy as np
import pandas as pd

from visitweight.core.exceptions import NumericalError
from visitweight.core.numerics import (SplineBasisSpec, design_matrix,
                                       fit_quantile_reg)
from visitweight.core.windows import CATEGORIES, WindowPolicy, classify_gap

__all__ = ('AgreementBands', 'CategorySummary', 'DiagnosticsReport',
           'MadResult', 'QuantitySummary', 'agreement_bands',
           'category_summary', 'diagnose', 'interval_summary',
           'mad_explained')

LOG = logging.getLogger(__name__)

BAND_TAUS = (0.05, 0.25, 0.75, 0.95)
BAND_SCALES = ('difference', 'ratio')
BAND_POINTS = 101
BAND_DF = 3


def _observed_gaps(dataset):
    """Return (S, R) arrays of uncensored gaps with both observed."""
    pairs = [(row.gap_forward, row.rec_interval) for row in dataset.rows()
             if row.gap_forward is not None and row.rec_interval is not None
             and not row.censored and row.gap_forward > 0]
    if not pairs:
        return np.empty(0), np.empty(0)
    gaps, rec_intervals = zip(*pairs)
    return np.array(gaps, dtype=float), np.array(rec_intervals, dtype=float)


@dataclass(frozen=True)
class MadResult:
    """Median absolute deviations of S, unadjusted and given R."""

    unadjusted: float
    adjusted: float
    fraction: Optional[float]
    n_gaps: int


def mad_explained(dataset):
    """Return the fraction of the MAD of S explained by R.

    The unadjusted MAD is taken about the median of S; the adjusted MAD
    about the median regression of S on R.

    Args:
        dataset (Dataset): visits with gaps and recommended intervals.

    Returns:
        MadResult: both deviations and ``1 - adjusted / unadjusted``, the
        fraction being None when S is constant.

    """
    gaps, rec_intervals = _observed_gaps(dataset)
    if len(gaps) < 2:
        raise NumericalError('at least 2 uncensored gaps with S and R are '
                             f'needed, got {len(gaps)}')
    unadjusted = float(np.median(np.abs(gaps - np.median(gaps))))
    if np.ptp(rec_intervals) == 0:
        fitted = np.full(len(gaps), np.median(gaps))
    else:
        design = np.column_stack([np.ones(len(gaps)), rec_intervals])
        fitted = design @ fit_quantile_reg(gaps, design, 0.5,
                                           ['intercept', 'R']).coefficients
    residuals = gaps - fitted
    if np.ptp(rec_intervals) > 0:
        # solver round-off
        residuals[np.abs(residuals) <= 1e-12 * np.max(np.abs(gaps))] = 0.0
    adjusted = float(np.median(np.abs(residuals)))
    if unadjusted == 0:
        LOG.warning('All observed gaps are equal; MAD fraction undefined.')
        return MadResult(unadjusted, adjusted, None, len(gaps))
    fraction = 1 - adjusted / unadjusted
    if fraction < 0:
        LOG.warning('Median regression fits worse than the median '
                    '(fraction %.3g); reporting 0.', fraction)
        fraction = 0.0
    return MadResult(unadjusted, adjusted, fraction, len(gaps))


@dataclass
class AgreementBands:
    """Quantile curves of S - R or S / R over a grid of R."""

    scale: str
    taus: tuple
    rec_grid: np.ndarray
    values: np.ndarray
    crossings: int = 0

    def to_frame(self):
        """Return columns ``R,tau,value,scale``, tau major."""
        taus = np.repeat(self.taus, len(self.rec_grid))
        return pd.DataFrame({'R': np.tile(self.rec_grid, len(self.taus)),
                             'tau': taus, 'value': self.values.ravel(),
                             'scale': self.scale})


def agreement_bands(dataset, taus=BAND_TAUS, scale='difference',
                    basis_df=BAND_DF, points=BAND_POINTS):
    """Fit quantile regressions of the gap agreement on a spline of R.

    Args:
        dataset (Dataset): visits with gaps and recommended intervals.
        taus (tuple): quantile levels, increasing.
        scale (str): ``difference`` for S - R or ``ratio`` for S / R.
        basis_df (int): spline df of R.
        points (int): size of the uniform R grid.

    Returns:
        AgreementBands: the fitted curves; crossings are counted and logged.

    """
    if scale not in BAND_SCALES:
        raise NumericalError(f'unknown band scale {scale!r}')
    gaps, rec_intervals = _observed_gaps(dataset)
    basis = SplineBasisSpec.from_data(rec_intervals, basis_df)
    design = design_matrix(rec_intervals, basis)
    if len(gaps) <= design.shape[1]:
        raise NumericalError(f'{len(gaps)} gaps for a basis with '
                             f'{design.shape[1]} columns')
    response = gaps - rec_intervals if scale == 'difference' else \
        gaps / rec_intervals
    rec_grid = np.linspace(rec_intervals.min(), rec_intervals.max(), points)
    grid_design = design_matrix(rec_grid, basis)
    values = np.array([grid_design @ fit_quantile_reg(response, design,
                                                      tau).coefficients
                       for tau in taus])
    crossings = int(np.sum(np.diff(values, axis=0) < -1e-9))
    if crossings:
        LOG.warning('%d quantile band crossing(s) on the %s scale.',
                    crossings, scale)
    return AgreementBands(scale=scale, taus=tuple(taus), rec_grid=rec_grid,
                          values=values, crossings=crossings)


@dataclass(frozen=True)
class CategorySummary:
    """Counts and proportions of visit categories."""

    counts: Dict[str, int]
    proportions: Dict[str, float]
    n_gaps: int


def category_summary(dataset, policy=None):
    """Count uncensored gaps with R per visit category."""
    policy = policy or WindowPolicy()
    gaps, rec_intervals = _observed_gaps(dataset)
    counts = {str(category): 0 for category in CATEGORIES}
    for gap, rec_interval in zip(gaps, rec_intervals):
        counts[str(classify_gap(gap, rec_interval, policy))] += 1
    total = len(gaps)
    proportions = {name: (count / total if total else 0.0)
                   for name, count in counts.items()}
    return CategorySummary(counts=counts, proportions=proportions,
                           n_gaps=total)


@dataclass(frozen=True)
class QuantitySummary:
    """Median, quartiles and range of one quantity."""

    median: float
    q25: float
    q75: float
    minimum: float
    maximum: float
    n: int


def _summarize(values):
    values = np.asarray(values, dtype=float)
    if len(values) == 0:
        return None
    q25, median, q75 = np.quantile(values, [0.25, 0.5, 0.75])
    return QuantitySummary(median=float(median), q25=float(q25),
                           q75=float(q75), minimum=float(values.min()),
                           maximum=float(values.max()), n=len(values))


def interval_summary(dataset):
    """Summarize S, R, S / R, S - R and DAS.

    Censored gaps are excluded, together with the R recorded on a censored
    final visit. Quartiles interpolate linearly between order statistics.

    Returns:
        dict: quantity name -> QuantitySummary, or None when empty.

    """
    gaps, rec_intervals = _observed_gaps(dataset)
    observed_gaps = [row.gap_forward for row in dataset.rows()
                     if row.gap_forward is not None and not row.censored]
    return {
        'S': _summarize(observed_gaps),
        'R': _summarize([row.rec_interval for row in dataset.rows()
                         if row.rec_interval is not None
                         and not row.censored]),
        'S/R': _summarize(gaps / rec_intervals),
        'S-R': _summarize(gaps - rec_intervals),
        'DAS': _summarize([row.das for row in dataset.rows()
                           if row.das is not None]),
    }


@dataclass
class DiagnosticsReport:
    """Agreement diagnostics of one dataset."""

    n_patients: int
    n_visits: int
    n_missing_r: int
    n_censored: int
    mad: Optional[MadResult]
    categories: CategorySummary
    intervals: Dict[str, Optional[QuantitySummary]] = field(
        default_factory=dict)

    def to_dict(self):
        """Return a JSON-ready dictionary."""
        return {
            'n_patients': self.n_patients, 'n_visits': self.n_visits,
            'n_missing_r': self.n_missing_r,
            'n_censored': self.n_censored,
            'mad': asdict(self.mad) if self.mad else None,
            'categories': asdict(self.categories),
            'intervals': {name: asdict(summary) if summary else None
                          for name, summary in self.intervals.items()}}

    def to_json(self):
        """Return the report as indented JSON."""
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + '\n'


def diagnose(dataset, policy=None):
    """Return the full diagnostics report of a dataset."""
    try:
        mad = mad_explained(dataset)
    except NumericalError as exc:
        LOG.warning('MAD explained not computed: %s', exc)
        mad = None
    return DiagnosticsReport(
        n_patients=len(dataset), n_visits=dataset.n_visits,
        n_missing_r=sum(1 for row in dataset.rows()
                        if row.rec_interval is None),
        n_censored=sum(1 for row in dataset.rows() if row.censored),
        mad=mad, categories=category_summary(dataset, policy),
        intervals=interval_summary(dataset))
