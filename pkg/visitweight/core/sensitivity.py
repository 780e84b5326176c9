"""Module with the sensitivity grid over (alpha_e, alpha_l) and elicitation.

Every grid cell refits the normalizers, recomputes the tilted weights,
refits the outcome model and integrates its trajectory. Cells are
independent and may run concurrently; a failed cell is recorded in the
grid instead of aborting the run.
"""
import io
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import bisect

from visitweight.core.constants import (ALPHA_START, ALPHA_STEP, ALPHA_STOP,
                                        AUC_INCREMENT, AUC_TIMERANGE,
                                        ELICITATION_BRACKET,
                                        ELICITATION_INTERVALS,
                                        ELICITATION_TARGETS,
                                        ELICITATION_WINDOW, NORMALIZER_DF,
                                        PLOT_INCREMENT, TIME_DF)
from visitweight.core.exceptions import (ElicitationError,
                                         VisitWeightException)
from visitweight.core.helpers import float_range, parallel_map
from visitweight.core.intensity import predict_intensity
from visitweight.core.outcome import (fit_outcome, predict_trajectory,
                                      trajectory_auc)
from visitweight.core.tilt import (TiltConfig, compute_tilted_weights,
                                   fit_normalizers, tilted_intensity)
from visitweight.core.windows import VisitCategory, WindowPolicy

__all__ = ('ElicitationCurve', 'GridSpec', 'PlausibleRange',
           'SensitivityGrid', 'elicitation_curve', 'elicitation_probability',
           'grid_from_csv', 'grid_to_csv', 'normalizer_builder_for',
           'plausible_alpha_range', 'run_grid')

LOG = logging.getLogger(__name__)

STATUS_OK = 'ok'
DEFAULT_TRAJECTORY_CELLS = ((0.0, 0.0), (4.0, 0.0), (7.0, 0.0))
HEATMAP_COLUMNS = ('alpha_e', 'alpha_l', 'auc', 'auc_rounded', 'status')


@dataclass(frozen=True)
class GridSpec:
    """Axes of the sensitivity grid, as inclusive uniform ranges."""

    alpha_e_start: float = ALPHA_START
    alpha_e_stop: float = ALPHA_STOP
    alpha_e_step: float = ALPHA_STEP
    alpha_l_start: float = ALPHA_START
    alpha_l_stop: float = ALPHA_STOP
    alpha_l_step: float = ALPHA_STEP

    @property
    def alpha_e(self):
        """Return the alpha_e axis."""
        return float_range(self.alpha_e_start, self.alpha_e_stop,
                           self.alpha_e_step)

    @property
    def alpha_l(self):
        """Return the alpha_l axis."""
        return float_range(self.alpha_l_start, self.alpha_l_stop,
                           self.alpha_l_step)

    def cells(self):
        """Return the (alpha_e, alpha_l) pairs in row-major order."""
        return [(float(alpha_e), float(alpha_l)) for alpha_e in self.alpha_e
                for alpha_l in self.alpha_l]


@dataclass
class SensitivityGrid:
    """AUC of the tilted fits over the grid.

    ``auc[i, j]`` belongs to ``alpha_e[i]`` and ``alpha_l[j]``; failed
    cells hold NaN and the error in ``status``.
    """

    alpha_e: np.ndarray
    alpha_l: np.ndarray
    auc: np.ndarray
    status: np.ndarray
    trajectories: Dict[Tuple[float, float], object] = field(
        default_factory=dict)

    def auc_at(self, alpha_e, alpha_l):
        """Return the AUC of one cell."""
        row = int(np.flatnonzero(np.isclose(self.alpha_e, alpha_e))[0])
        column = int(np.flatnonzero(np.isclose(self.alpha_l, alpha_l))[0])
        return float(self.auc[row, column])

    @property
    def failed_cells(self):
        """Return the (alpha_e, alpha_l) of every failed cell."""
        rows, columns = np.nonzero(self.status != STATUS_OK)
        return [(float(self.alpha_e[row]), float(self.alpha_l[column]))
                for row, column in zip(rows, columns)]

    @property
    def is_partial(self):
        """Return True if any cell failed."""
        return bool(self.failed_cells)

    def to_frame(self):
        """Return one row per cell, alpha_e major."""
        alpha_e, alpha_l = np.meshgrid(self.alpha_e, self.alpha_l,
                                       indexing='ij')
        return pd.DataFrame({
            'alpha_e': alpha_e.ravel(), 'alpha_l': alpha_l.ravel(),
            'auc': self.auc.ravel(), 'auc_rounded': np.round(self.auc, 1)
            .ravel(), 'status': self.status.ravel()},
            columns=list(HEATMAP_COLUMNS))


def _run_cell(cell, dataset, model_set, tilt, policy, time_df,
              normalizer_df, timerange, increment, cap):
    alpha_e, alpha_l = cell
    config = replace(tilt, alpha_e=alpha_e, alpha_l=alpha_l)
    try:
        normalizers = fit_normalizers(dataset, config, basis_df=normalizer_df,
                                      policy=policy)
        weights = compute_tilted_weights(dataset, model_set, normalizers,
                                         config, policy=policy, cap=cap)
        gee = fit_outcome(dataset, weights, basis_df=time_df)
        return trajectory_auc(gee, timerange, increment), STATUS_OK, gee
    except VisitWeightException as exc:
        LOG.warning('Grid cell (%g, %g) failed: %s', alpha_e, alpha_l, exc)
        return np.nan, f'failed: {exc}', None


def run_grid(dataset, model_set, policy=None, spec=None, tilt=None,
             jobs=1, **options):
    """Compute the AUC of the tilted outcome fit on every grid cell.

    Args:
        dataset (Dataset): visits with derived fields.
        model_set (IntensityModelSet): fitted AAR intensity models.
        policy (WindowPolicy): visit window thresholds.
        spec (GridSpec): grid axes.
        tilt (TiltConfig): tilting function and normalizer rows; its alphas
            are replaced per cell.
        jobs (int): number of cells computed concurrently.
        **options: ``time_df``, ``normalizer_df``, ``timerange``,
            ``increment``, ``weight_cap`` and ``trajectory_cells`` (cells
            whose trajectories are kept, on a ``plot_increment`` grid).

    Returns:
        SensitivityGrid: the AUC matrix and selected trajectories.

    """
    policy = policy or WindowPolicy()
    spec = spec or GridSpec()
    tilt = tilt or TiltConfig()
    timerange = options.get('timerange', AUC_TIMERANGE)
    plot_increment = options.get('plot_increment', PLOT_INCREMENT)
    trajectory_cells = options.get('trajectory_cells',
                                   DEFAULT_TRAJECTORY_CELLS)
    cells = spec.cells()
    LOG.info('Running sensitivity grid of %d cells with %d job(s).',
             len(cells), jobs)

    def run(cell):
        return _run_cell(cell, dataset, model_set, tilt, policy,
                         options.get('time_df', TIME_DF),
                         options.get('normalizer_df', NORMALIZER_DF),
                         timerange, options.get('increment', AUC_INCREMENT),
                         options.get('weight_cap'))

    results = parallel_map(run, cells, jobs=jobs)
    alpha_e, alpha_l = spec.alpha_e, spec.alpha_l
    shape = (len(alpha_e), len(alpha_l))
    auc = np.array([result[0] for result in results]).reshape(shape)
    status = np.array([result[1] for result in results],
                      dtype=object).reshape(shape)

    trajectories = {}
    for cell, (_, _, gee) in zip(cells, results):
        wanted = any(np.isclose(cell, selected).all()
                     for selected in trajectory_cells)
        if wanted and gee is not None:
            trajectories[cell] = predict_trajectory(gee, 0.0, timerange,
                                                    plot_increment)
    grid = SensitivityGrid(alpha_e=alpha_e, alpha_l=alpha_l, auc=auc,
                           status=status, trajectories=trajectories)
    if grid.is_partial:
        LOG.warning('%d of %d grid cells failed.', len(grid.failed_cells),
                    len(cells))
    return grid


def grid_to_csv(grid):
    """Return the heatmap CSV of a grid, AUC at full precision."""
    return grid.to_frame().to_csv(index=False, lineterminator='\n')


def grid_from_csv(csv_text):
    """Read a heatmap CSV written by :func:`grid_to_csv`."""
    frame = pd.read_csv(io.StringIO(csv_text), float_precision='round_trip',
                        keep_default_na=False, na_values=[''])
    alpha_e = np.unique(frame['alpha_e'].to_numpy(dtype=float))
    alpha_l = np.unique(frame['alpha_l'].to_numpy(dtype=float))
    frame = frame.sort_values(['alpha_e', 'alpha_l'], kind='stable')
    shape = (len(alpha_e), len(alpha_l))
    return SensitivityGrid(
        alpha_e=alpha_e, alpha_l=alpha_l,
        auc=frame['auc'].to_numpy(dtype=float).reshape(shape),
        status=frame['status'].astype(str).to_numpy(dtype=object)
        .reshape(shape))


@dataclass(frozen=True)
class ElicitationCurve:
    """Probability of a visit within the elicitation window, against D."""

    rec_interval: float
    alpha: float
    das_increase: np.ndarray
    probability: np.ndarray

    @property
    def is_monotone(self):
        """Return True if the probabilities never decrease in D."""
        return bool(np.all(np.diff(self.probability) >= 0))

    def to_frame(self):
        """Return columns ``R,alpha,D,probability``."""
        return pd.DataFrame({'R': self.rec_interval, 'alpha': self.alpha,
                             'D': self.das_increase,
                             'probability': self.probability})


def _check_very_early(rec_interval, policy):
    if rec_interval - policy.very_early_offset <= 0:
        raise ElicitationError(
            f'very-early window empty for R={rec_interval:g}')


def elicitation_probability(rec_interval, das_increase, alpha_e, model_set,
                            normalizers=None, config=None, policy=None,
                            window=ELICITATION_WINDOW):
    """Return the probability of a very early visit within *window*.

    The probability is ``1 - exp(-rate * window)`` for the tilted very
    early intensity at R and D.

    Args:
        rec_interval (float): recommended interval R (months).
        das_increase (float, array-like): outcome increase D.
        alpha_e (float): early tilt.
        model_set (IntensityModelSet): fitted AAR intensity models.
        normalizers (NormalizerModels): normalizers fitted at *alpha_e*;
            None uses a normalizer of 1.
        config (TiltConfig): tilting function.
        policy (WindowPolicy): visit window thresholds.
        window (float): elicitation window in months.

    Returns:
        float or numpy.ndarray: probabilities.

    """
    policy = policy or WindowPolicy()
    _check_very_early(rec_interval, policy)
    config = replace(config or TiltConfig(), alpha_e=alpha_e)
    rate = predict_intensity(model_set, rec_interval,
                             VisitCategory.VERY_EARLY)
    tilted = tilted_intensity(rate, VisitCategory.VERY_EARLY,
                              np.asarray(das_increase, dtype=float),
                              rec_interval, normalizers, config)
    return -np.expm1(-tilted * window)


def elicitation_curve(rec_interval, alpha_e, model_set,
                      normalizer_builder=None, config=None, policy=None,
                      das_grid=None):
    """Return the elicitation curve of one R and alpha over a D grid.

    Args:
        rec_interval (float): recommended interval R (months).
        alpha_e (float): early tilt.
        model_set (IntensityModelSet): fitted AAR intensity models.
        normalizer_builder (callable): ``alpha -> NormalizerModels``; None
            uses a normalizer of 1.
        config (TiltConfig): tilting function.
        policy (WindowPolicy): visit window thresholds.
        das_grid (array-like): D values, 0 to 10 by 0.1 by default.

    Returns:
        ElicitationCurve: the curve.

    """
    das_grid = float_range(0.0, 10.0, 0.1) if das_grid is None else \
        np.asarray(das_grid, dtype=float)
    normalizers = normalizer_builder(alpha_e) if normalizer_builder else None
    probability = elicitation_probability(rec_interval, das_grid, alpha_e,
                                          model_set, normalizers, config,
                                          policy)
    return ElicitationCurve(rec_interval=float(rec_interval),
                            alpha=float(alpha_e), das_increase=das_grid,
                            probability=np.asarray(probability))


@dataclass(frozen=True)
class PlausibleRange:
    """Alpha range reaching the elicited asymptotes.

    Attributes:
        alpha_lo (float): smallest alpha reaching the lower target.
        alpha_hi (float): largest alpha reaching the upper target.
        solutions (dict): (R, target) -> alpha.
    """

    alpha_lo: float
    alpha_hi: float
    solutions: Dict[Tuple[float, float], float]

    def to_dict(self):
        """Return a JSON-ready dictionary."""
        return {'alpha_lo': self.alpha_lo, 'alpha_hi': self.alpha_hi,
                'solutions': [{'R': rec, 'target': target, 'alpha': alpha}
                              for (rec, target), alpha in
                              sorted(self.solutions.items())]}


def _asymptote(alpha, rec_interval, rate, normalizer_builder, window):
    constant = 1.0
    if normalizer_builder is not None:
        constant = normalizer_builder(alpha).early.value(rec_interval)
    return -np.expm1(-rate * constant * np.exp(alpha) * window)


def _solve_alpha(target, rec_interval, rate, normalizer_builder, bracket,
                 window):
    def gap(alpha):
        return _asymptote(alpha, rec_interval, rate, normalizer_builder,
                          window) - target

    lower, upper = bracket
    at_lower, at_upper = gap(lower), gap(upper)
    if abs(at_lower) <= 1e-12:
        return float(lower)
    if at_lower * at_upper > 0:
        raise ElicitationError(
            f'target {target:g} unreachable for R={rec_interval:g} with '
            f'alpha in [{lower:g}, {upper:g}]')
    return float(bisect(gap, lower, upper, xtol=1e-12))


def plausible_alpha_range(model_set, normalizer_builder=None,
                          r_set=ELICITATION_INTERVALS,
                          targets=ELICITATION_TARGETS,
                          bracket=ELICITATION_BRACKET, policy=None,
                          window=ELICITATION_WINDOW):
    """Search the alpha range whose asymptotes match the elicited targets.

    For every R the asymptote ``1 - exp(-rate * c(R) * e^alpha * window)``
    of the very early visit probability is solved for each target by
    bisection.

    Args:
        model_set (IntensityModelSet): fitted AAR intensity models.
        normalizer_builder (callable): ``alpha -> NormalizerModels``; None
            uses a normalizer of 1.
        r_set (tuple): recommended intervals (months).
        targets (tuple): (lower, upper) asymptote targets.
        bracket (tuple): alpha search interval.
        policy (WindowPolicy): visit window thresholds.
        window (float): elicitation window in months.

    Returns:
        PlausibleRange: min over R of the lower-target solutions and max
        over R of the upper-target solutions.

    """
    policy = policy or WindowPolicy()
    lower_target, upper_target = targets
    solutions = {}
    for rec_interval in r_set:
        _check_very_early(rec_interval, policy)
        rate = predict_intensity(model_set, rec_interval,
                                 VisitCategory.VERY_EARLY)
        for target in (lower_target, upper_target):
            solutions[(float(rec_interval), float(target))] = _solve_alpha(
                target, rec_interval, rate, normalizer_builder, bracket,
                window)
    alpha_lo = min(solutions[(float(rec), float(lower_target))]
                   for rec in r_set)
    alpha_hi = max(solutions[(float(rec), float(upper_target))]
                   for rec in r_set)
    LOG.info('Plausible alpha range [%.3f, %.3f].', alpha_lo, alpha_hi)
    return PlausibleRange(alpha_lo=alpha_lo, alpha_hi=alpha_hi,
                          solutions=solutions)


def normalizer_builder_for(dataset, config=None, basis_df=NORMALIZER_DF,
                           policy=None):
    """Return ``alpha -> NormalizerModels`` fitting early normalizers."""
    config = config or TiltConfig()

    def build(alpha):
        return fit_normalizers(dataset, replace(config, alpha_e=alpha,
                                                alpha_l=alpha),
                               basis_df=basis_df, policy=policy)

    return build

