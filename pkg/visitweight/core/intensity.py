"""Module with the category-specific visit intensity models and weights.

Every gap with a recommended interval contributes time at risk to the
visit windows it traverses. For each window an exponential model with
log-rate linear in a spline basis of R is fitted, and each visit is
weighted by the inverse of the fitted intensity of the window it arrived
in.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
import pandas as pd

from visitweight.core.constants import (IN_WINDOW_DF, OUT_OF_WINDOW_DF,
                                        WEIGHT_RATIO_WARNING)
from visitweight.core.exceptions import (IntensityFitError, NoEventsError,
                                         NumericalError,
                                         UnfittedCategoryError)
from visitweight.core.helpers import parallel_map
from visitweight.core.numerics import (LinearFit, SplineBasisSpec,
                                       design_column_names, design_matrix,
                                       fit_exponential_survival)
from visitweight.core.windows import (CATEGORIES, VisitCategory, WindowPolicy,
                                      classify_gap, decompose_risk)

__all__ = ('CategoryModel', 'IntensityModelSet', 'RiskRow', 'WeightTable',
           'aar_rate', 'align_weights', 'build_risk_table', 'compute_weights',
           'default_basis_dfs', 'fit_intensity_models', 'predict_intensity')

LOG = logging.getLogger(__name__)

WEIGHT_COLUMNS = ('patient_id', 'visit_index', 'time_since_dx', 'das',
                  'arrival_category', 'raw_weight', 'lag_weight', 'weight')


@dataclass(frozen=True)
class RiskRow:  # pylint: disable=too-many-instance-attributes
    """Time at risk and events of one gap.

    Attributes:
        patient_id (str): patient of the gap.
        gap_index (int): visit_index of the visit that opens the gap.
        rec_interval (float): recommended interval R in months.
        exposures (dict): VisitCategory -> positive time at risk.
        events (dict): VisitCategory -> 0 or 1, for every exposed category.
        das_increase (float): D of the gap, None when not observed.
        censored (bool): True when the gap ends at study end.
    """

    patient_id: str
    gap_index: int
    rec_interval: float
    exposures: Dict[VisitCategory, float]
    events: Dict[VisitCategory, int]
    das_increase: Optional[float] = None
    censored: bool = False

    def exposure(self, category):
        """Return the time at risk of *category*, None when absent."""
        return self.exposures.get(category)

    def event(self, category):
        """Return 1 when the gap ended with a visit of *category*."""
        return self.events.get(category, 0)

    @property
    def event_category(self):
        """Return the category of the arriving visit, None if censored."""
        for category, event in self.events.items():
            if event:
                return category
        return None


def build_risk_table(dataset, policy=None):
    """Return one RiskRow per gap that has a recommended interval.

    Gaps without R or without a gap length are left out; censored final
    gaps are kept with every event indicator at zero.

    Args:
        dataset (Dataset): visits with derived fields.
        policy (WindowPolicy): visit window thresholds.

    Returns:
        list: RiskRow instances in dataset order.

    """
    policy = policy or WindowPolicy()
    table = []
    missing_r = 0
    for row in dataset.rows():
        if row.gap_forward is None:
            continue
        if row.rec_interval is None:
            missing_r += 1
            continue
        if row.gap_forward <= 0:
            LOG.warning('Skipping zero-length gap after visit %d of patient '
                        '%s.', row.visit_index, row.patient_id)
            continue
        decomposition = decompose_risk(row.gap_forward, row.rec_interval,
                                       censored=row.censored, policy=policy)
        events = {category: int(category is decomposition.event_category)
                  for category in decomposition.durations}
        table.append(RiskRow(patient_id=row.patient_id,
                             gap_index=row.visit_index,
                             rec_interval=row.rec_interval,
                             exposures=dict(decomposition.durations),
                             events=events,
                             das_increase=row.das_increase_forward,
                             censored=row.censored))
    if missing_r:
        LOG.info('%d gap(s) without recommended interval left out of the '
                 'risk table.', missing_r)
    return table


@dataclass(frozen=True)
class CategoryModel:
    """Fitted exponential intensity model of one visit category."""

    category: VisitCategory
    fit: LinearFit
    basis: SplineBasisSpec
    n_rows: int = 0
    n_events: int = 0
    used_increase_filter: bool = False

    def rate(self, rec_interval, warn_on_clamp=True):
        """Return the fitted rate per month at one or more values of R."""
        design = design_matrix(rec_interval, self.basis,
                               warn_on_clamp=warn_on_clamp)
        return np.exp(self.fit.predict(design))


@dataclass(frozen=True)
class IntensityModelSet:
    """Intensity models of the five visit categories.

    Attributes:
        models (dict): VisitCategory -> CategoryModel for fitted categories.
        failures (dict): VisitCategory -> exception for failed fits.
    """

    models: Dict[VisitCategory, CategoryModel] = field(default_factory=dict)
    failures: Dict[VisitCategory, Exception] = field(default_factory=dict)

    def is_fitted(self, category):
        """Return True if *category* has a fitted model."""
        return category in self.models

    def model(self, category):
        """Return the model of *category* or raise UnfittedCategoryError."""
        try:
            return self.models[category]
        except KeyError:
            raise UnfittedCategoryError(category)

    def summary_frame(self):
        """Return coefficients with model-based standard errors.

        One row per coefficient of each fitted category, and one row per
        failed category with its error in the ``status`` column.
        """
        records = []
        for category in CATEGORIES:
            if category in self.models:
                model = self.models[category]
                errors = model.fit.standard_errors
                names = model.fit.column_names or [
                    f'b{index}' for index in
                    range(len(model.fit.coefficients))]
                for index, term in enumerate(names):
                    records.append({
                        'category': str(category), 'term': term,
                        'estimate': float(model.fit.coefficients[index]),
                        'std_error': (float(errors[index])
                                      if errors is not None else np.nan),
                        'n_rows': model.n_rows, 'n_events': model.n_events,
                        'status': 'ok'})
            elif category in self.failures:
                records.append({
                    'category': str(category), 'term': '',
                    'estimate': np.nan, 'std_error': np.nan,
                    'n_rows': 0, 'n_events': 0,
                    'status': str(self.failures[category])})
        return pd.DataFrame.from_records(
            records, columns=['category', 'term', 'estimate', 'std_error',
                              'n_rows', 'n_events', 'status'])


def default_basis_dfs():
    """Return the spline df of R used for each category."""
    return {category: (IN_WINDOW_DF if category is VisitCategory.IN_WINDOW
                       else OUT_OF_WINDOW_DF)
            for category in CATEGORIES}


def _fit_category(category, risk_rows, basis_df):
    """Fit the exponential model of one category."""
    filtered = category.is_out_of_window
    rows = [row for row in risk_rows
            if row.exposure(category) is not None and
            (not filtered or row.das_increase is not None)]
    if not rows:
        raise NoEventsError(str(category))
    exposure = np.array([row.exposure(category) for row in rows])
    events = np.array([row.event(category) for row in rows], dtype=float)
    if events.sum() <= 0:
        raise NoEventsError(str(category))
    rec_intervals = np.array([row.rec_interval for row in rows])
    basis = SplineBasisSpec.from_data(rec_intervals, basis_df)
    design = design_matrix(rec_intervals, basis)
    fit = fit_exponential_survival(exposure, events, design,
                                   column_names=design_column_names(basis),
                                   stratum=str(category))
    LOG.info('Fitted %s intensity on %d gaps with %d visits.', category,
             len(rows), int(events.sum()))
    return CategoryModel(category=category, fit=fit, basis=basis,
                         n_rows=len(rows), n_events=int(events.sum()),
                         used_increase_filter=filtered)


def fit_intensity_models(risk_rows, basis_dfs=None, jobs=1, strict=True):
    """Fit the five category-specific intensity models.

    Out-of-window models use only gaps whose outcome increase D is
    observed; the in-window model uses every gap exposed to it.

    Args:
        risk_rows (list): RiskRow instances.
        basis_dfs (dict): VisitCategory -> spline df of R.
        jobs (int): number of categories fitted concurrently.
        strict (bool): raise IntensityFitError when any category fails.

    Returns:
        IntensityModelSet: the fitted models.

    """
    dfs = default_basis_dfs()
    dfs.update(basis_dfs or {})

    def fit_one(category):
        try:
            return category, _fit_category(category, risk_rows,
                                           dfs[category]), None
        except NumericalError as exc:
            LOG.warning('Intensity fit failed for %s: %s', category, exc)
            return category, None, exc

    results = parallel_map(fit_one, CATEGORIES, jobs=jobs)
    model_set = IntensityModelSet(
        models={category: model for category, model, _ in results if model},
        failures={category: exc for category, _, exc in results if exc})
    if strict and model_set.failures:
        raise IntensityFitError(model_set.failures, model_set)
    return model_set


def predict_intensity(model_set, rec_interval, category):
    """Return the fitted intensity of *category* at R (per month).

    Args:
        model_set (IntensityModelSet): fitted models.
        rec_interval (float): recommended interval, clamped to the range
            the model was fitted on.
        category (VisitCategory): visit category.

    Returns:
        float: a positive rate.

    """
    rate = model_set.model(category).rate(rec_interval)
    return float(rate[0]) if np.ndim(rec_interval) == 0 else rate


class WeightTable:
    """Per-visit inverse-intensity weights.

    ``raw_weight`` belongs to the gap that a visit opens, ``lag_weight``
    is the raw weight of the previous gap of the same patient and
    ``weight`` is the one used in the outcome fit (1 at first visits).
    Missing values are NaN.
    """

    def __init__(self, frame, label='aar'):
        """Wrap a frame with the :data:`WEIGHT_COLUMNS`."""
        self.frame = frame
        self.label = label

    def __len__(self):
        return len(self.frame)

    @property
    def weights(self):
        """Return the final weights as an array."""
        return self.frame['weight'].to_numpy(dtype=float)

    def defined(self):
        """Return the rows with a final weight."""
        return self.frame[self.frame['weight'].notna()]

    def max_relative_difference(self, other):
        """Return the largest relative weight difference with *other*.

        Rows where both weights are missing are equal; a weight present in
        only one table counts as an infinite difference.
        """
        mine, theirs = self.weights, other.weights
        both_missing = np.isnan(mine) & np.isnan(theirs)
        if np.any(np.isnan(mine) != np.isnan(theirs)):
            return float('inf')
        present = ~both_missing
        if not present.any():
            return 0.0
        difference = np.abs(mine[present] - theirs[present])
        return float(np.max(difference / np.abs(theirs[present])))

    def to_csv(self):
        """Return the table as CSV text."""
        return self.frame.to_csv(index=False, lineterminator='\n')


def align_weights(dataset, rate_function, policy=None, cap=None,
                  label='aar'):
    """Invert intensities and shift them onto the arriving visits.

    Args:
        dataset (Dataset): visits with derived fields.
        rate_function (callable): ``(VisitRow, VisitCategory) -> rate``,
            returning None when the rate is undefined.
        policy (WindowPolicy): visit window thresholds.
        cap (float): optional upper bound for the final weights.
        label (str): name of the weighting.

    Returns:
        WeightTable: one row per visit.

    """
    policy = policy or WindowPolicy()
    records = []
    for patient_rows in dataset:
        previous_raw = np.nan
        previous_category = ''
        for position, row in enumerate(patient_rows):
            raw, category = _raw_weight(row, rate_function, policy)
            weight = 1.0 if position == 0 else previous_raw
            records.append({
                'patient_id': row.patient_id,
                'visit_index': row.visit_index,
                'time_since_dx': row.time_since_dx,
                'das': np.nan if row.das is None else row.das,
                'arrival_category': '' if position == 0 else previous_category,
                'raw_weight': raw,
                'lag_weight': np.nan if position == 0 else previous_raw,
                'weight': weight})
            previous_raw = raw
            previous_category = str(category) if category else ''
    frame = pd.DataFrame.from_records(records, columns=list(WEIGHT_COLUMNS))
    if cap is not None:
        frame['weight'] = frame['weight'].clip(upper=cap)
    _check_weight_ratio(frame['weight'], label)
    return WeightTable(frame, label=label)


def _raw_weight(row, rate_function, policy):
    """Return (1 / intensity, category) of the gap a visit opens."""
    if row.gap_forward is None or row.rec_interval is None or row.censored \
            or row.gap_forward <= 0:
        return np.nan, None
    category = classify_gap(row.gap_forward, row.rec_interval, policy)
    rate = rate_function(row, category)
    if rate is None:
        return np.nan, category
    return 1.0 / rate, category


def _check_weight_ratio(weights, label):
    present = weights.dropna()
    if present.empty:
        return
    ratio = present.max() / present.median()
    if ratio > WEIGHT_RATIO_WARNING:
        LOG.warning('%s weights: max/median ratio %.1f exceeds %g.', label,
                    ratio, WEIGHT_RATIO_WARNING)


def aar_rate(model_set):
    """Return the rate function of the fitted AAR intensities.

    Out-of-window rates are undefined when D is missing, and rates of
    unfitted categories are undefined.
    """
    unfitted = set()
    cache = {}

    def rate(row, category):
        if category.is_out_of_window and row.das_increase_forward is None:
            return None
        if not model_set.is_fitted(category):
            if category not in unfitted:
                LOG.warning('No %s model; those visits get no weight.',
                            category)
                unfitted.add(category)
            return None
        key = (category, row.rec_interval)
        if key not in cache:
            cache[key] = predict_intensity(model_set, row.rec_interval,
                                           category)
        return cache[key]

    return rate


def compute_weights(dataset, model_set, policy=None, cap=None):
    """Return the AAR inverse-intensity weights of every visit.

    Args:
        dataset (Dataset): visits with derived fields.
        model_set (IntensityModelSet): fitted models.
        policy (WindowPolicy): visit window thresholds.
        cap (float): optional upper bound for the final weights.

    Returns:
        WeightTable: weights labelled ``aar``.

    """
    return align_weights(dataset, aar_rate(model_set), policy=policy,
                         cap=cap, label='aar')

