"""Module with the synthetic cohort generator and its known truth.

Each patient has a latent outcome ``mu(t) + b_i + U_i(t) + F_i(t)`` where
``mu(t) = a + b exp(-c t)``, ``b_i`` is a patient offset, ``U_i`` a
stationary Gaussian process with exponential correlation and ``F_i`` the
decaying bumps of Poisson flares (ANAR only). The recorded outcome adds
measurement noise and is optionally rounded and clamped to [0, 12].

Visits follow the mechanism:

* ACAR: every gap is ``acar_interval * exp(eps)``, whatever the outcome;
* AAR: R is assigned from the recorded outcome and the gap is
  ``R * exp(eps)``;
* ANAR: as AAR, but a flare brings the next visit forward to a short
  random delay after it.
"""
import logging
import math
from configparser import ConfigParser
from configparser import Error as ConfigParserError
from dataclasses import dataclass, fields
from datetime import date, timedelta
from enum import Enum
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from visitweight.core.constants import (DAS_MAX, DAS_MIN, MONTHS_PER_YEAR,
                                        PLOT_INCREMENT)
from visitweight.core.dataset import Dataset, VisitRow, derive_diffs
from visitweight.core.exceptions import SimulationError
from visitweight.core.helpers import float_range, get_date, parallel_map
from visitweight.core.numerics import trapezoid_integral

__all__ = ('Mechanism', 'ScenarioSpec', 'SimOutput', 'TruthTrajectory',
           'simulate', 'true_mean')

LOG = logging.getLogger(__name__)

DAYS_PER_YEAR = 365.25
TRUTH_STREAM = 7919
TRUTH_DRAWS = 100_000
DEFAULT_RULE = ((7.0, 1.0), (4.0, 2.0), (2.0, 3.0))


class Mechanism(Enum):
    """How visit times depend on the outcome."""

    ACAR = 'acar'
    AAR = 'aar'
    ANAR = 'anar'

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class ScenarioSpec:  # pylint: disable=too-many-instance-attributes
    """Parameters of a synthetic cohort.

    Times are in years except where a name says months. ``rule`` holds
    ``(threshold, R)`` pairs sorted by decreasing threshold: the first
    threshold not above the recorded outcome gives R, and ``rule_floor``
    applies below the last one.
    """

    mechanism: Mechanism = Mechanism.AAR
    n_patients: int = 500
    horizon: float = 7.0
    mean_a: float = 1.0
    mean_b: float = 6.0
    mean_c: float = 1.2
    between_sd: float = 1.0
    ar_sd: float = 1.0
    ar_scale_months: float = 3.0
    noise_sd: float = 0.5
    rule: Tuple[Tuple[float, float], ...] = DEFAULT_RULE
    rule_floor: float = 6.0
    acar_interval: float = 3.0
    adherence_sd: float = 0.15
    flare_rate: float = 1.0
    flare_bump_low: float = 3.0
    flare_bump_high: float = 6.0
    flare_delay_months: float = 0.25
    flare_decay_months: float = 2.0
    round_das: bool = True
    clamp_das: bool = True
    seed: int = 1
    start_date: date = date(2009, 1, 1)

    def __post_init__(self):
        """Validate the scenario."""
        if self.n_patients < 1:
            raise SimulationError('n_patients must be at least 1')
        positive = ('horizon', 'mean_c', 'ar_scale_months', 'rule_floor',
                    'acar_interval', 'flare_delay_months',
                    'flare_decay_months')
        for name in positive:
            if not getattr(self, name) > 0:
                raise SimulationError(f'{name} must be positive')
        non_negative = ('between_sd', 'ar_sd', 'noise_sd', 'adherence_sd',
                        'flare_rate')
        for name in non_negative:
            if getattr(self, name) < 0:
                raise SimulationError(f'{name} must not be negative')
        if self.flare_bump_low > self.flare_bump_high:
            raise SimulationError('flare_bump_low exceeds flare_bump_high')
        thresholds = [threshold for threshold, _ in self.rule]
        if any(upper <= lower for upper, lower in
               zip(thresholds, thresholds[1:])):
            raise SimulationError('rule thresholds must be strictly '
                                  'decreasing')
        if any(not interval > 0 for _, interval in self.rule):
            raise SimulationError('rule intervals must be positive')

    @classmethod
    def from_config(cls, source):
        """Read a flat ``key = value`` scenario file.

        Args:
            source (str, Path): path of the file, or its text.

        Returns:
            ScenarioSpec: defaults overridden by the file.

        """
        path = Path(source) if not str(source).count('\n') else None
        text = path.read_text() if path is not None and path.exists() \
            else str(source)
        if not any(line.lstrip().startswith('[')
                   for line in text.splitlines()):
            text = '[scenario]\n' + text
        parser = ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except ConfigParserError as exc:
            raise SimulationError(f'unreadable scenario file: {exc}') \
                from exc
        if not parser.has_section('scenario'):
            raise SimulationError('scenario file without [scenario] section')
        values = {}
        known = {field.name: field for field in fields(cls)}
        for key, raw in parser.items('scenario'):
            if key not in known:
                raise SimulationError(f'unknown scenario key {key!r}')
            values[key] = _convert(key, raw, getattr(cls(), key))
        return cls(**values)

    def mean(self, times):
        """Return the mean trajectory ``a + b exp(-c t)``."""
        return self.mean_a + self.mean_b * np.exp(-self.mean_c *
                                                  np.asarray(times, float))

    def rule_interval(self, das):
        """Return the recommended interval (months) for a recorded DAS."""
        for threshold, interval in self.rule:
            if das >= threshold:
                return interval
        return self.rule_floor

    @property
    def has_flares(self):
        """Return True when flares act on the cohort."""
        return self.mechanism is Mechanism.ANAR and self.flare_rate > 0


def _convert(key, raw, default):
    """Convert a scenario file value to the type of its default."""
    raw = raw.strip()
    try:
        if isinstance(default, Mechanism):
            return Mechanism(raw.lower())
        if isinstance(default, bool):
            if raw.lower() not in ('true', 'false', '1', '0', 'yes', 'no'):
                raise ValueError(raw)
            return raw.lower() in ('true', '1', 'yes')
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, date):
            return get_date(raw)
        if key == 'rule':
            pairs = [item.split(':') for item in raw.split(',')]
            return tuple((float(threshold), float(interval))
                         for threshold, interval in pairs)
    except ValueError:
        raise SimulationError(f'invalid value for {key}: {raw!r}')
    return raw


def _record(spec, value):
    if spec.round_das:
        value = float(np.round(value))
    if spec.clamp_das:
        value = min(max(value, DAS_MIN), DAS_MAX)
    return float(value)


class _Flares:
    """Flare onsets, bumps and visit delays of one patient (years)."""

    def __init__(self, spec, rng):
        count = rng.poisson(spec.flare_rate * spec.horizon) \
            if spec.has_flares else 0
        self.onsets = np.sort(rng.uniform(0, spec.horizon, count))
        self.bumps = rng.uniform(spec.flare_bump_low, spec.flare_bump_high,
                                 count)
        self.delays = rng.exponential(spec.flare_delay_months, count) / \
            MONTHS_PER_YEAR
        self.decay = spec.flare_decay_months / MONTHS_PER_YEAR

    def level(self, time):
        """Return the summed flare bumps at *time*."""
        active = self.onsets <= time
        return float(np.sum(self.bumps[active] * np.exp(
            -(time - self.onsets[active]) / self.decay)))

    def triggered_visit(self, after, before):
        """Return the earliest flare-triggered visit in (after, before)."""
        inside = (self.onsets > after) & (self.onsets < before)
        if not inside.any():
            return None
        visit = float(np.min(self.onsets[inside] + self.delays[inside]))
        return visit if visit < before else None


def _simulate_patient(spec, index):
    """Return the visits of one patient."""
    main_seed, flare_seed = np.random.SeedSequence([spec.seed,
                                                    index]).spawn(2)
    rng = np.random.default_rng(main_seed)
    flares = _Flares(spec, np.random.default_rng(flare_seed))
    patient_id = str(index + 1)
    offset = rng.normal(0, spec.between_sd)
    process = rng.normal(0, spec.ar_sd)

    visits = []
    time = 0.0
    while True:
        measurement = rng.normal(0, spec.noise_sd)
        adherence = rng.normal(0, spec.adherence_sd)
        latent = float(spec.mean(time)) + offset + process + \
            flares.level(time)
        das = _record(spec, latent + measurement)
        if spec.mechanism is Mechanism.ACAR:
            rec_interval = spec.acar_interval
        else:
            rec_interval = spec.rule_interval(das)
        following = time + rec_interval * math.exp(adherence) / \
            MONTHS_PER_YEAR
        if spec.has_flares:
            following = flares.triggered_visit(time, following) or following
        if following > spec.horizon:
            visits.append((time, das, rec_interval,
                           (spec.horizon - time) * MONTHS_PER_YEAR, True))
            break
        visits.append((time, das, rec_interval, None, False))
        correlation = math.exp(-(following - time) * MONTHS_PER_YEAR /
                               spec.ar_scale_months)
        process = correlation * process + math.sqrt(
            1 - correlation ** 2) * spec.ar_sd * rng.normal()
        time = following

    rows = []
    for position, (time, das, rec_interval, gap, censored) in \
            enumerate(visits):
        if gap is None:
            gap = (visits[position + 1][0] - time) * MONTHS_PER_YEAR
        calendar_date = spec.start_date + timedelta(
            days=round(time * DAYS_PER_YEAR))
        rows.append(VisitRow(patient_id=patient_id, visit_index=position,
                             time_since_dx=time, calendar_date=calendar_date,
                             das=das, gap_forward=gap, censored=censored,
                             rec_interval=rec_interval))
    return tuple(rows)


@dataclass(frozen=True)
class TruthTrajectory:
    """Marginal mean of the recorded outcome on a time grid."""

    times: np.ndarray
    mean: np.ndarray
    std_error: Optional[np.ndarray] = None
    method: str = 'closed_form'

    def auc(self):
        """Return the trapezoid area under the truth."""
        return trapezoid_integral(self.mean, self.times[1] - self.times[0])

    def to_frame(self):
        """Return columns ``time,mean_das,std_error,method``."""
        errors = self.std_error if self.std_error is not None else \
            np.zeros(len(self.times))
        return pd.DataFrame({'time': self.times, 'mean_das': self.mean,
                             'std_error': errors, 'method': self.method})


def _flare_mean(spec, times):
    if not spec.has_flares:
        return np.zeros(len(times))
    decay = spec.flare_decay_months / MONTHS_PER_YEAR
    bump = (spec.flare_bump_low + spec.flare_bump_high) / 2
    return spec.flare_rate * bump * decay * (1 - np.exp(-times / decay))


def _sample_flares(spec, time, draws, rng):
    if not spec.has_flares or time <= 0:
        return np.zeros(draws)
    counts = rng.poisson(spec.flare_rate * time, draws)
    total = int(counts.sum())
    onsets = rng.uniform(0, time, total)
    bumps = rng.uniform(spec.flare_bump_low, spec.flare_bump_high, total)
    decay = spec.flare_decay_months / MONTHS_PER_YEAR
    owners = np.repeat(np.arange(draws), counts)
    return np.bincount(owners, weights=bumps * np.exp(-(time - onsets) /
                                                       decay),
                       minlength=draws)


def true_mean(spec, times=None, draws=TRUTH_DRAWS):
    """Return the marginal mean of the recorded outcome.

    Without rounding and clamping the mean is the closed form
    ``mu(t)`` plus the mean flare level; otherwise it is estimated from
    *draws* independent draws per time with its standard error.

    Args:
        spec (ScenarioSpec): the scenario.
        times (array-like): time grid in years, 0 to horizon by 0.1 by
            default.
        draws (int): Monte-Carlo draws per time.

    Returns:
        TruthTrajectory: the truth.

    """
    times = float_range(0.0, spec.horizon, PLOT_INCREMENT) if times is None \
        else np.asarray(times, dtype=float)
    closed_form = spec.mean(times) + _flare_mean(spec, times)
    if not spec.round_das and not spec.clamp_das:
        return TruthTrajectory(times=times, mean=closed_form)

    rng = np.random.default_rng(np.random.SeedSequence([spec.seed,
                                                        TRUTH_STREAM]))
    scale = math.sqrt(spec.between_sd ** 2 + spec.ar_sd ** 2 +
                      spec.noise_sd ** 2)
    means, errors = [], []
    for time in times:
        values = float(spec.mean(time)) + rng.normal(0, scale, draws) + \
            _sample_flares(spec, time, draws, rng)
        if spec.round_das:
            values = np.round(values)
        if spec.clamp_das:
            values = np.clip(values, DAS_MIN, DAS_MAX)
        means.append(values.mean())
        errors.append(values.std(ddof=1) / math.sqrt(draws))
    return TruthTrajectory(times=times, mean=np.array(means),
                           std_error=np.array(errors), method='monte_carlo')


@dataclass(frozen=True)
class SimOutput:
    """Simulated dataset with its scenario and truth."""

    dataset: Dataset
    spec: ScenarioSpec
    truth: TruthTrajectory


def simulate(spec, jobs=1, truth_times=None, truth_draws=TRUTH_DRAWS):
    """Generate a cohort under *spec*.

    Patients use random streams derived from the seed and their index, so
    the output does not depend on *jobs*.

    Args:
        spec (ScenarioSpec): the scenario.
        jobs (int): number of patients simulated concurrently.
        truth_times (array-like): time grid of the truth.
        truth_draws (int): Monte-Carlo draws of the truth.

    Returns:
        SimOutput: dataset and truth.

    """
    patients = parallel_map(lambda index: _simulate_patient(spec, index),
                            range(spec.n_patients), jobs=jobs)
    dataset = derive_diffs(Dataset(tuple(patients)))
    outside = sum(1 for row in dataset.rows()
                  if not DAS_MIN <= row.das <= DAS_MAX)
    if outside:
        LOG.warning('%d simulated DAS value(s) outside [%d, %d]; the '
                    'file needs das_range disabled to parse.',
                    outside, DAS_MIN, DAS_MAX)
    LOG.info('Simulated %d visits of %d %s patients.', dataset.n_visits,
             len(dataset), spec.mechanism)
    return SimOutput(dataset=dataset, spec=spec,
                     truth=true_mean(spec, truth_times, truth_draws))

