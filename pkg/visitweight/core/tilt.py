"""Module with the exponential tilting of out-of-window visit intensities.

Under assessment not at random the intensity of an early or very early
visit is multiplied by ``c_e(R) * exp(alpha_e * q(D))`` and that of a late
or very late visit by ``c_l(R) * exp(alpha_l * q(D))``, where ``q`` is a
normal CDF of the outcome increase D and ``c`` is the regression of
``exp(-alpha * q(D))`` on a spline of R. In-window intensities are never
tilted.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from visitweight.core.constants import NORMALIZER_DF, Q_MEAN, Q_SD
from visitweight.core.exceptions import ConfigError, NormalizerError
from visitweight.core.intensity import aar_rate, align_weights
from visitweight.core.numerics import (LinearFit, SplineBasisSpec,
                                       design_column_names, design_matrix,
                                       fit_wls, normal_cdf)
from visitweight.core.windows import WindowPolicy, classify_gap

__all__ = ('Normalizer', 'NormalizerModels', 'TiltConfig',
           'compute_tilted_weights', 'fit_normalizers', 'q_value',
           'tilted_intensity')

LOG = logging.getLogger(__name__)

NORMALIZER_ROWS = ('all', 'out_of_window')


@dataclass(frozen=True)
class TiltConfig:
    """Sensitivity parameters of the tilted intensities.

    Attributes:
        alpha_e (float): tilt of early and very early visits.
        alpha_l (float): tilt of late and very late visits.
        q_mean (float): mean of the normal CDF applied to D.
        q_sd (float): standard deviation of that CDF.
        normalizer_rows (str): ``all`` gaps or only ``out_of_window`` gaps
            in the normalizer regressions.
    """

    alpha_e: float = 0.0
    alpha_l: float = 0.0
    q_mean: float = Q_MEAN
    q_sd: float = Q_SD
    normalizer_rows: str = 'all'

    def __post_init__(self):
        """Validate the configuration."""
        if not self.q_sd > 0:
            raise ConfigError(f'q_sd must be positive, got {self.q_sd}')
        if self.alpha_e < 0 or self.alpha_l < 0:
            raise ConfigError('alpha values must be non-negative, got '
                              f'({self.alpha_e}, {self.alpha_l})')
        if self.normalizer_rows not in NORMALIZER_ROWS:
            raise ConfigError('normalizer_rows must be one of '
                              f'{", ".join(NORMALIZER_ROWS)}')

    def alpha_for(self, category):
        """Return the alpha acting on *category* (0 for in-window)."""
        if category.is_early:
            return self.alpha_e
        if category.is_late:
            return self.alpha_l
        return 0.0


def q_value(das_increase, config=None):
    """Return the tilting function ``Phi((D - q_mean) / q_sd)``."""
    config = config or TiltConfig()
    return normal_cdf(das_increase, config.q_mean, config.q_sd)


@dataclass(frozen=True)
class Normalizer:
    """Fitted normalizing constant of one alpha.

    With alpha 0 the response is identically 1 and no model is fitted.
    """

    alpha: float
    fit: Optional[LinearFit] = None
    basis: Optional[SplineBasisSpec] = None
    n_rows: int = 0

    def value(self, rec_interval):
        """Return the fitted normalizer at one or more values of R."""
        if self.fit is None:
            return 1.0 if np.ndim(rec_interval) == 0 else \
                np.ones(len(rec_interval))
        fitted = self.fit.predict(design_matrix(rec_interval, self.basis,
                                                warn_on_clamp=False))
        if np.any(fitted <= 0):
            raise NormalizerError(
                f'normalizer non-positive at alpha={self.alpha:g}; '
                'reduce basis df')
        return float(fitted[0]) if np.ndim(rec_interval) == 0 else fitted


@dataclass(frozen=True)
class NormalizerModels:
    """Normalizers of early (alpha_e) and late (alpha_l) visits."""

    early: Normalizer
    late: Normalizer

    def for_category(self, category):
        """Return the normalizer acting on *category*."""
        return self.early if category.is_early else self.late


def _normalizer_rows(dataset, config, policy):
    rows = []
    for row in dataset.rows():
        if row.das_increase_forward is None or row.rec_interval is None:
            continue
        if config.normalizer_rows == 'out_of_window':
            if row.gap_forward is None or row.gap_forward <= 0 or \
                    not classify_gap(row.gap_forward, row.rec_interval,
                                     policy).is_out_of_window:
                continue
        rows.append(row)
    return rows


def _fit_normalizer(alpha, increases, rec_intervals, config, basis_df):
    if alpha == 0:
        return Normalizer(alpha=0.0, n_rows=len(increases))
    basis = SplineBasisSpec.from_data(rec_intervals, basis_df)
    design = design_matrix(rec_intervals, basis)
    if len(increases) <= design.shape[1]:
        raise NormalizerError(
            f'{len(increases)} gaps with D and R observed; at least '
            f'{design.shape[1] + 1} needed')
    response = np.exp(-alpha * q_value(increases, config))
    fit = fit_wls(design, response, column_names=design_column_names(basis))
    normalizer = Normalizer(alpha=alpha, fit=fit, basis=basis,
                            n_rows=len(increases))
    normalizer.value(np.unique(rec_intervals))
    return normalizer


def fit_normalizers(dataset, config, basis_df=NORMALIZER_DF, policy=None):
    """Regress ``exp(-alpha * q(D))`` on a spline of R for both alphas.

    Args:
        dataset (Dataset): visits with derived fields.
        config (TiltConfig): alphas and tilting function.
        basis_df (int): spline df of R.
        policy (WindowPolicy): thresholds, used with
            ``normalizer_rows='out_of_window'``.

    Returns:
        NormalizerModels: the early and late normalizers.

    """
    policy = policy or WindowPolicy()
    rows = _normalizer_rows(dataset, config, policy)
    increases = np.array([row.das_increase_forward for row in rows])
    rec_intervals = np.array([row.rec_interval for row in rows])
    early = _fit_normalizer(config.alpha_e, increases, rec_intervals, config,
                            basis_df)
    if config.alpha_l == config.alpha_e:
        late = early
    else:
        late = _fit_normalizer(config.alpha_l, increases, rec_intervals,
                               config, basis_df)
    LOG.debug('Fitted normalizers for alpha_e=%g, alpha_l=%g on %d gaps.',
              config.alpha_e, config.alpha_l, len(rows))
    return NormalizerModels(early=early, late=late)


def tilted_intensity(rate, category, das_increase, rec_interval,
                     normalizers, config):
    """Return the intensity of a visit allowing for ANAR.

    Args:
        rate (float): AAR intensity of the visit.
        category (VisitCategory): category of the visit.
        das_increase (float, array-like): outcome increase D.
        rec_interval (float): recommended interval R.
        normalizers (NormalizerModels): fitted normalizers, or None for a
            normalizer of 1.
        config (TiltConfig): alphas and tilting function.

    Returns:
        float: the tilted rate; None when D is missing for an
        out-of-window visit.

    """
    if not category.is_out_of_window:
        return rate
    if das_increase is None:
        return None
    alpha = config.alpha_for(category)
    constant = 1.0 if normalizers is None else \
        normalizers.for_category(category).value(rec_interval)
    return rate * constant * np.exp(alpha * q_value(das_increase, config))


def compute_tilted_weights(dataset, model_set, normalizers, config,
                           policy=None, cap=None):
    """Return inverse-intensity weights from the tilted intensities.

    Weights are aligned exactly as the AAR weights.

    Args:
        dataset (Dataset): visits with derived fields.
        model_set (IntensityModelSet): fitted AAR intensity models.
        normalizers (NormalizerModels): normalizers fitted for *config*.
        config (TiltConfig): alphas and tilting function.
        policy (WindowPolicy): visit window thresholds.
        cap (float): optional upper bound for the final weights.

    Returns:
        WeightTable: weights labelled ``anar(alpha_e,alpha_l)``.

    """
    base = aar_rate(model_set)

    def rate(row, category):
        aar = base(row, category)
        if aar is None:
            return None
        return tilted_intensity(aar, category, row.das_increase_forward,
                                row.rec_interval, normalizers, config)

    label = f'anar({config.alpha_e:g},{config.alpha_l:g})'
    return align_weights(dataset, rate, policy=policy, cap=cap, label=label)
