"""Module with the weighted marginal outcome model and its trajectories."""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from visitweight.core.constants import AUC_INCREMENT, AUC_TIMERANGE, \
    PLOT_INCREMENT, TIME_DF
from visitweight.core.exceptions import NumericalError
from visitweight.core.helpers import float_range
from visitweight.core.numerics import (LinearFit, SplineBasisSpec,
                                       design_column_names, design_matrix,
                                       fit_wls, trapezoid_integral)

__all__ = ('GeeFit', 'TrajectoryGrid', 'fit_outcome', 'predict_trajectory',
           'trajectory_auc')

LOG = logging.getLogger(__name__)


@dataclass(frozen=True)
class GeeFit:
    """Outcome regression on a spline of time since diagnosis.

    Attributes:
        fit (LinearFit): coefficients and patient-clustered sandwich
            covariance.
        basis (SplineBasisSpec): time basis the coefficients refer to.
        label (str): ``unweighted``, ``aar`` or ``anar(alpha_e,alpha_l)``.
        n_rows (int): visits used.
        n_clusters (int): patients used.
    """

    fit: LinearFit
    basis: SplineBasisSpec
    label: str = 'unweighted'
    n_rows: int = 0
    n_clusters: int = 0

    def predict(self, times, warn_on_clamp=True):
        """Return the fitted mean outcome at *times* (years).

        Times outside the fitted range are clamped to its boundary and
        logged as a warning unless *warn_on_clamp* is false.
        """
        design = design_matrix(times, self.basis,
                               warn_on_clamp=warn_on_clamp)
        return self.fit.predict(design)


@dataclass(frozen=True)
class TrajectoryGrid:
    """Fitted mean outcome on a uniform time grid."""

    times: np.ndarray
    values: np.ndarray
    label: str = ''

    def __post_init__(self):
        """Check the grid."""
        if len(self.times) < 2 or len(self.times) != len(self.values):
            raise NumericalError('a trajectory needs at least 2 grid points')

    @property
    def increment(self):
        """Return the grid spacing."""
        return float(self.times[1] - self.times[0])

    def to_frame(self):
        """Return the grid with columns ``time,mean_das,label``."""
        return pd.DataFrame({'time': self.times, 'mean_das': self.values,
                             'label': self.label})


def _outcome_rows(dataset, weight_table):
    """Return (times, das, weights, patient ids) of the usable visits."""
    frame = dataset.to_frame()
    if weight_table is None:
        frame['weight'] = 1.0
    else:
        weights = weight_table.frame[['patient_id', 'visit_index', 'weight']]
        frame = frame.merge(weights, on=['patient_id', 'visit_index'],
                            how='left', validate='one_to_one')
    usable = frame['das'].notna() & frame['weight'].notna()
    dropped_das = int(frame['das'].isna().sum())
    dropped_weight = int((frame['das'].notna() &
                          frame['weight'].isna()).sum())
    if dropped_das or dropped_weight:
        LOG.info('Outcome fit drops %d visit(s) without DAS and %d without '
                 'weight.', dropped_das, dropped_weight)
    frame = frame[usable]
    return (frame['time_since_dx'].to_numpy(dtype=float),
            frame['das'].to_numpy(dtype=float),
            frame['weight'].to_numpy(dtype=float),
            frame['patient_id'].to_numpy())


def fit_outcome(dataset, weight_table=None, basis_df=TIME_DF,
                unweighted=False, label: Optional[str] = None):
    """Fit the marginal outcome model with independence working correlation.

    Args:
        dataset (Dataset): visits with DAS.
        weight_table (WeightTable): weights of the visits; None uses unit
            weights on every visit with DAS.
        basis_df (int): spline df of time since diagnosis.
        unweighted (bool): use unit weights but only on the visits that
            have a weight in *weight_table*.
        label (str): name of the fit, defaults to the weighting label.

    Returns:
        GeeFit: the fitted model.

    """
    times, das, weights, patients = _outcome_rows(dataset, weight_table)
    if unweighted or weight_table is None:
        weights = np.ones(len(das))
        label = label or 'unweighted'
    else:
        label = label or weight_table.label
    basis = SplineBasisSpec.from_data(times, basis_df)
    design = design_matrix(times, basis)
    if len(das) <= design.shape[1]:
        raise NumericalError(f'{len(das)} usable visits for a time basis '
                             f'with {design.shape[1]} columns')
    fit = fit_wls(design, das, weights, cluster_ids=patients,
                  column_names=design_column_names(basis, prefix='t'))
    n_clusters = len(np.unique(patients))
    LOG.info('Fitted %s outcome model on %d visits of %d patients.', label,
             len(das), n_clusters)
    return GeeFit(fit=fit, basis=basis, label=label, n_rows=len(das),
                  n_clusters=n_clusters)


def predict_trajectory(gee_fit, t_start=0.0, t_end=AUC_TIMERANGE,
                       increment=PLOT_INCREMENT):
    """Evaluate a fitted outcome model on a uniform grid.

    Times beyond the fitted range are clamped to its boundary.

    Args:
        gee_fit (GeeFit): fitted model.
        t_start (float): first grid time (years).
        t_end (float): last grid time (years).
        increment (float): grid spacing.

    Returns:
        TrajectoryGrid: the fitted trajectory.

    """
    if not t_end > t_start or not increment > 0:
        raise NumericalError('trajectory grid needs t_end > t_start and a '
                             'positive increment')
    times = float_range(t_start, t_end, increment)
    return TrajectoryGrid(times=times, values=gee_fit.predict(times),
                          label=gee_fit.label)


def trajectory_auc(gee_fit, timerange=AUC_TIMERANGE,
                   increment=AUC_INCREMENT):
    """Return the area under the fitted trajectory over [0, timerange]."""
    grid = predict_trajectory(gee_fit, 0.0, timerange, increment)
    return trapezoid_integral(grid.values, increment)
