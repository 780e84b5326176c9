"""Module with the numerical machinery shared by the analysis steps.

All functions are pure: they take arrays and return new objects, so callers
may run independent fits concurrently.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.integrate import trapezoid
from scipy.interpolate import BSpline
from scipy.linalg import qr
from scipy.optimize import linprog
from scipy.special import ndtr

from visitweight.core.exceptions import (ConvergenceError, NoEventsError,
                                         NumericalError, RankDeficientError)

__all__ = ('LinearFit', 'SplineBasisSpec', 'bspline_basis', 'design_matrix',
           'fit_exponential_survival', 'fit_quantile_reg', 'fit_wls',
           'normal_cdf', 'trapezoid_integral')

LOG = logging.getLogger(__name__)

MAX_NEWTON_ITERATIONS = 100
MAX_STEP_HALVINGS = 30
LOGLIK_TOLERANCE = 1e-10


@dataclass(frozen=True)
class SplineBasisSpec:
    """Cubic B-spline basis over a bounded range.

    Attributes:
        df (int): number of basis columns; 0 means no spline columns.
        interior_knots (tuple): sorted interior knots.
        boundary_knots (tuple): (lower, upper) range of the basis.
        degree (int): polynomial degree.
        intercept (bool): keep the first B-spline column; without it the
            columns match R's ``splines::bs`` default and the model adds
            its own intercept.
    """

    df: int
    interior_knots: Tuple[float, ...] = ()
    boundary_knots: Tuple[float, float] = (0.0, 1.0)
    degree: int = 3
    intercept: bool = False

    def __post_init__(self):
        """Check knot placement and column count."""
        if self.df == 0:
            return
        if self.df < self.degree:
            raise NumericalError(
                f'spline df ({self.df}) is smaller than its degree '
                f'({self.degree})')
        lower, upper = self.boundary_knots
        if not lower < upper:
            raise NumericalError(
                f'boundary knots must be increasing, got {self.boundary_knots}')
        knots = np.asarray(self.interior_knots, dtype=float)
        if np.any(np.diff(knots) < 0) or np.any(knots <= lower) or \
                np.any(knots >= upper):
            raise NumericalError('interior knots must be sorted and inside '
                                 'the boundary knots')
        expected = len(knots) + self.degree + (1 if self.intercept else 0)
        if expected != self.df:
            raise NumericalError(
                f'{len(knots)} interior knots give {expected} columns, '
                f'not df={self.df}')

    @classmethod
    def from_data(cls, values, df, degree=3, intercept=False):
        """Place interior knots at equally spaced quantiles of *values*.

        The df is lowered when the data have too few distinct values to
        support it (at most one column per distinct value, counting the
        model intercept); a df of 0 gives an intercept-only design.

        Args:
            values (array-like): data the basis is fitted on.
            df (int): requested number of basis columns.
            degree (int): polynomial degree.
            intercept (bool): see the class attributes.

        Returns:
            SplineBasisSpec: the basis.

        """
        values = np.asarray(values, dtype=float)
        values = values[np.isfinite(values)]
        distinct = np.unique(values)
        usable = max(len(distinct) - (0 if intercept else 1), 0)
        if df > 0 and usable < df:
            LOG.warning('Only %d distinct values; spline df lowered from %d '
                        'to %d.', len(distinct), df, usable)
            df = usable
        bounds = ((float(distinct[0]), float(distinct[-1]))
                  if len(distinct) else (0.0, 1.0))
        if df == 0:
            return cls(df=0, boundary_knots=bounds, degree=degree,
                       intercept=intercept)
        # a low df is served by a lower degree with no interior knots
        degree = min(degree, df - (1 if intercept else 0))
        n_interior = df - degree - (1 if intercept else 0)
        probs = np.linspace(0, 1, n_interior + 2)[1:-1]
        knots = np.unique(np.quantile(values, probs))
        knots = knots[(knots > bounds[0]) & (knots < bounds[1])]
        if len(knots) < n_interior:
            LOG.warning('Tied quantile knots; spline df lowered from %d to '
                        '%d.', df, df - n_interior + len(knots))
            df -= n_interior - len(knots)
        return cls(df=df, interior_knots=tuple(float(k) for k in knots),
                   boundary_knots=bounds, degree=degree, intercept=intercept)

    @property
    def knot_vector(self):
        """Return the full knot vector with repeated boundary knots."""
        lower, upper = self.boundary_knots
        return np.concatenate([np.repeat(lower, self.degree + 1),
                               np.asarray(self.interior_knots, dtype=float),
                               np.repeat(upper, self.degree + 1)])

    def column_names(self, prefix='s'):
        """Return names of the basis columns."""
        return [f'{prefix}{index + 1}' for index in range(self.df)]


def bspline_basis(values, spec, warn_on_clamp=True):
    """Evaluate the B-spline basis columns at *values*.

    Values outside the boundary knots are clamped to the boundary.

    Args:
        values (array-like): evaluation points.
        spec (SplineBasisSpec): the basis.
        warn_on_clamp (bool): log clamped points as a warning (debug
            otherwise).

    Returns:
        numpy.ndarray: matrix of shape (len(values), spec.df).

    """
    values = np.atleast_1d(np.asarray(values, dtype=float))
    if spec.df == 0:
        return np.zeros((len(values), 0))
    lower, upper = spec.boundary_knots
    clamped = np.clip(values, lower, upper)
    n_clamped = int(np.count_nonzero(clamped != values))
    if n_clamped:
        level = logging.WARNING if warn_on_clamp else logging.DEBUG
        LOG.log(level, 'Clamped %d value(s) to the basis range [%g, %g].',
                n_clamped, lower, upper)
    knots = spec.knot_vector
    n_basis = len(knots) - spec.degree - 1
    basis = BSpline(knots, np.eye(n_basis), spec.degree,
                    extrapolate=True)(clamped)
    if not spec.intercept:
        basis = basis[:, 1:]
    return basis


def design_matrix(values, spec, warn_on_clamp=True):
    """Return the basis with a leading intercept column when needed."""
    basis = bspline_basis(values, spec, warn_on_clamp=warn_on_clamp)
    if spec.intercept:
        return basis
    return np.column_stack([np.ones(len(basis)), basis])


def design_column_names(spec, prefix='s'):
    """Return the names of :func:`design_matrix` columns."""
    names = spec.column_names(prefix)
    return names if spec.intercept else ['intercept'] + names


@dataclass(frozen=True)
class LinearFit:
    """Coefficients of a linear-predictor fit.

    Attributes:
        coefficients (numpy.ndarray): estimated coefficients.
        covariance (numpy.ndarray): sandwich or model-based covariance.
        iterations (int): solver iterations (0 for direct solves).
        objective (float): final objective value.
        column_names (tuple): names of the design columns.
    """

    coefficients: np.ndarray
    covariance: Optional[np.ndarray] = None
    iterations: int = 0
    objective: float = float('nan')
    column_names: Tuple[str, ...] = field(default=())

    def predict(self, design):
        """Return the linear predictor for a design matrix."""
        return np.asarray(design, dtype=float) @ self.coefficients

    @property
    def standard_errors(self):
        """Return square roots of the covariance diagonal."""
        if self.covariance is None:
            return None
        return np.sqrt(np.clip(np.diag(self.covariance), 0, None))


def _check_rank(design, column_names=None):
    """Raise RankDeficientError naming columns that add no rank."""
    design = np.asarray(design, dtype=float)
    n_rows, n_columns = design.shape
    names = list(column_names or range(n_columns))
    if n_columns == 0:
        return
    if n_rows == 0:
        raise RankDeficientError(names)
    _, upper, pivots = qr(design, mode='economic', pivoting=True)
    diagonal = np.abs(np.diag(upper))
    tolerance = diagonal[0] * max(n_rows, n_columns) * np.finfo(float).eps
    rank = int(np.count_nonzero(diagonal > tolerance))
    if rank < n_columns:
        raise RankDeficientError([names[index] for index in pivots[rank:]])


def _solve(matrix, rhs, what):
    try:
        return np.linalg.solve(matrix, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f'cannot solve the {what} system: {exc}')


def _inverse(matrix, what):
    try:
        return np.linalg.inv(matrix)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f'singular {what} matrix: {exc}')


def _cluster_sums(scores, cluster_ids):
    """Sum rows of *scores* within each cluster, clusters in sorted order."""
    _, inverse = np.unique(np.asarray(cluster_ids), return_inverse=True)
    sums = np.zeros((inverse.max() + 1, scores.shape[1]))
    np.add.at(sums, inverse, scores)
    return sums


def fit_wls(design, response, weights=None, cluster_ids=None,
            column_names=None):
    """Weighted least squares with a cluster-robust sandwich covariance.

    Solves ``(X'WX) b = X'Wy``; the covariance is
    ``(X'WX)^-1 [sum_c s_c s_c'] (X'WX)^-1`` with cluster scores
    ``s_c = X_c' W_c (y_c - X_c b)``. Without cluster ids every row is its
    own cluster.

    Args:
        design (array-like): n x p design matrix X.
        response (array-like): n responses y.
        weights (array-like): positive weights, unit when None.
        cluster_ids (array-like): cluster label of each row.
        column_names (list): names used in rank-deficiency errors.

    Returns:
        LinearFit: coefficients, sandwich covariance, weighted SSR.

    """
    design = np.asarray(design, dtype=float)
    response = np.asarray(response, dtype=float)
    n_rows = len(response)
    weights = (np.ones(n_rows) if weights is None
               else np.asarray(weights, dtype=float))
    if design.shape[0] != n_rows or len(weights) != n_rows:
        raise NumericalError('design, response and weights differ in length')
    if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
        raise NumericalError('weights must be finite and positive')
    _check_rank(design, column_names)

    root = np.sqrt(weights)
    try:
        coefficients, *_ = np.linalg.lstsq(design * root[:, None],
                                           response * root, rcond=None)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f'least squares failed: {exc}')
    residuals = response - design @ coefficients
    bread = _inverse(design.T @ (design * weights[:, None]), 'bread')
    scores = design * (weights * residuals)[:, None]
    if cluster_ids is None:
        meat = scores.T @ scores
    else:
        sums = _cluster_sums(scores, cluster_ids)
        meat = sums.T @ sums
    covariance = bread @ meat @ bread
    covariance = (covariance + covariance.T) / 2
    return LinearFit(coefficients=coefficients, covariance=covariance,
                     objective=float(np.sum(weights * residuals ** 2)),
                     column_names=tuple(column_names or ()))


def _exponential_loglik(design, exposure, events, coefficients):
    eta = design @ coefficients
    return float(np.sum(events * eta - exposure * np.exp(eta)))


def fit_exponential_survival(exposure, events, design, column_names=None,
                             stratum=None):
    """Maximum likelihood for an exponential model with log-linear rate.

    Maximizes ``sum(d * eta - t * exp(eta))`` with ``eta = X gamma`` by
    Newton-Raphson with step halving, starting from zero except for an
    all-ones column set to ``log(sum d / sum t)``.

    Args:
        exposure (array-like): positive times at risk t.
        events (array-like): event indicators d.
        design (array-like): design matrix X.
        column_names (list): names used in errors.
        stratum (str): stratum name used in errors.

    Returns:
        LinearFit: log-rate coefficients and the inverse observed
        information as covariance.

    """
    exposure = np.asarray(exposure, dtype=float)
    events = np.asarray(events, dtype=float)
    design = np.asarray(design, dtype=float)
    if np.any(exposure <= 0):
        raise NumericalError('exposure times must be positive')
    if events.sum() <= 0:
        raise NoEventsError(stratum)
    _check_rank(design, column_names)

    coefficients = np.zeros(design.shape[1])
    ones = np.flatnonzero(np.all(design == 1.0, axis=0))
    if len(ones):
        coefficients[ones[0]] = np.log(events.sum() / exposure.sum())

    loglik = _exponential_loglik(design, exposure, events, coefficients)
    trace = [(0, loglik)]
    for iteration in range(1, MAX_NEWTON_ITERATIONS + 1):
        expected = exposure * np.exp(design @ coefficients)
        score = design.T @ (events - expected)
        information = design.T @ (design * expected[:, None])
        step = _solve(information, score, 'Newton')
        scale = 1.0
        for _ in range(MAX_STEP_HALVINGS + 1):
            candidate = coefficients + scale * step
            new_loglik = _exponential_loglik(design, exposure, events,
                                             candidate)
            if np.isfinite(new_loglik) and new_loglik >= loglik:
                break
            scale /= 2
        else:
            raise ConvergenceError(
                f'step halving failed in stratum {stratum}', trace)
        change = new_loglik - loglik
        coefficients, loglik = candidate, new_loglik
        trace.append((iteration, loglik))
        if abs(change) < LOGLIK_TOLERANCE:
            expected = exposure * np.exp(design @ coefficients)
            information = design.T @ (design * expected[:, None])
            LOG.debug('Exponential fit %s converged in %d iterations.',
                      stratum, iteration)
            covariance = _inverse(information, 'information')
            return LinearFit(coefficients=coefficients,
                             covariance=covariance,
                             iterations=iteration, objective=loglik,
                             column_names=tuple(column_names or ()))
    raise ConvergenceError(
        f'no convergence after {MAX_NEWTON_ITERATIONS} iterations in '
        f'stratum {stratum}', trace)


def _check_loss(response, design, coefficients, tau):
    residuals = response - design @ coefficients
    return float(np.sum(residuals * (tau - (residuals < 0))))


def fit_quantile_reg(response, design, tau=0.5, column_names=None):
    """Linear quantile regression solved as a linear program.

    Minimizes ``sum rho_tau(y - X b)`` with
    ``rho_tau(u) = u (tau - 1{u < 0})`` using the HiGHS solver, then
    re-solves exactly through the data points the optimum interpolates.

    Args:
        response (array-like): n responses y.
        design (array-like): n x p design matrix X.
        tau (float): quantile level in (0, 1).
        column_names (list): names used in errors.

    Returns:
        LinearFit: coefficients and the achieved check loss.

    """
    if not 0 < tau < 1:
        raise NumericalError(f'tau must lie in (0, 1), got {tau}')
    response = np.asarray(response, dtype=float)
    design = np.asarray(design, dtype=float)
    n_rows, n_columns = design.shape
    _check_rank(design, column_names)

    # variables: b (free), u >= 0, v >= 0 with X b + u - v = y
    cost = np.concatenate([np.zeros(n_columns), np.full(n_rows, tau),
                           np.full(n_rows, 1 - tau)])
    identity = sparse.identity(n_rows, format='csr')
    constraints = sparse.hstack([sparse.csr_matrix(design), identity,
                                 -identity], format='csr')
    bounds = [(None, None)] * n_columns + [(0, None)] * (2 * n_rows)
    result = linprog(cost, A_eq=constraints, b_eq=response, bounds=bounds,
                     method='highs')
    if result.status != 0:
        raise NumericalError(f'quantile regression failed: {result.message}')
    coefficients = _polish(response, design, result.x[:n_columns], tau)
    return LinearFit(coefficients=coefficients,
                     objective=_check_loss(response, design, coefficients,
                                           tau),
                     iterations=int(getattr(result, 'nit', 0) or 0),
                     column_names=tuple(column_names or ()))


def _polish(response, design, coefficients, tau):
    """Re-solve exactly through the interpolated points of an LP vertex."""
    n_columns = design.shape[1]
    residuals = np.abs(response - design @ coefficients)
    basic = np.argsort(residuals, kind='stable')[:n_columns]
    subset = design[basic]
    if np.linalg.matrix_rank(subset) < n_columns:
        return coefficients
    exact = np.linalg.solve(subset, response[basic])
    if _check_loss(response, design, exact, tau) <= \
            _check_loss(response, design, coefficients, tau) + 1e-9:
        return exact
    return coefficients


def normal_cdf(values, mean=0.0, sd=1.0):
    """Return the normal cumulative distribution function.

    Args:
        values (float, array-like): evaluation points.
        mean (float): mean.
        sd (float): positive standard deviation.

    Returns:
        float or numpy.ndarray: probabilities.

    """
    if not sd > 0:
        raise NumericalError(f'standard deviation must be positive, got {sd}')
    return ndtr((np.asarray(values, dtype=float) - mean) / sd)


def trapezoid_integral(values, spacing):
    """Integrate samples on a uniform grid with the trapezoid rule.

    Args:
        values (array-like): function values at the grid points.
        spacing (float): grid spacing.

    Returns:
        float: the integral, endpoints weighted by spacing / 2.

    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or len(values) < 2:
        raise NumericalError('trapezoid integration needs at least 2 points')
    return float(trapezoid(values, dx=spacing))
