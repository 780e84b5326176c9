"""Module with the visit data model, CSV ingestion and derived quantities.

A dataset is the seven-column visit table::

    id,date,time_since_dx,DAS,S,censor,R

where ``time_since_dx`` is in years, ``S`` (observed gap to the next visit)
and ``R`` (recommended gap assigned at this visit) are in months, and empty
fields denote missing values.
"""
import io
import logging
import math
from dataclasses import dataclass, field, replace
from datetime import date
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd

from visitweight.core.constants import (DAS_MAX, DAS_MIN, DAYS_PER_MONTH,
                                        GAP_RELATIVE_TOLERANCE,
                                        MONTHS_PER_YEAR, WEEKS_PER_MONTH)
from visitweight.core.exceptions import DatasetValidationError
from visitweight.core.helpers import get_date

__all__ = ('COLUMNS', 'Dataset', 'ParseOptions', 'UnitConstants', 'VisitRow',
           'convert_interval', 'dataset_to_csv', 'derive_diffs',
           'parse_dataset')

LOG = logging.getLogger(__name__)

COLUMNS = ('id', 'date', 'time_since_dx', 'DAS', 'S', 'censor', 'R')


@dataclass(frozen=True)
class UnitConstants:
    """Conversion factors to the month time scale."""

    weeks_per_month: float = WEEKS_PER_MONTH
    days_per_month: float = DAYS_PER_MONTH


UNITS = UnitConstants()


@dataclass(frozen=True)
class VisitRow:  # pylint: disable=too-many-instance-attributes
    """One clinic visit of one patient."""

    patient_id: str
    visit_index: int
    time_since_dx: float
    calendar_date: Optional[date] = None
    das: Optional[float] = None
    gap_forward: Optional[float] = None
    censored: bool = False
    rec_interval: Optional[float] = None
    das_diff_forward: Optional[float] = None
    das_increase_forward: Optional[float] = None


@dataclass(frozen=True)
class ParseOptions:
    """Options of :func:`parse_dataset`.

    Attributes:
        strict_integer_das (bool): reject non-integral DAS values.
        gap_tolerance (float): relative tolerance between S and the gap
            implied by consecutive ``time_since_dx`` values.
        strict_gaps (bool): raise instead of warning when S and the times
            disagree beyond ``gap_tolerance``.
        study_end (date): end of the study period, used to fill S on a
            censored final row that has a date but no S.
        das_range (tuple): accepted (min, max) of DAS, None to accept any
            finite value.
    """

    strict_integer_das: bool = False
    gap_tolerance: float = GAP_RELATIVE_TOLERANCE
    strict_gaps: bool = False
    study_end: Optional[date] = None
    das_range: Optional[Tuple[float, float]] = (DAS_MIN, DAS_MAX)


@dataclass(frozen=True)
class Dataset:
    """Visits grouped by patient, immutable after construction."""

    patients: Tuple[Tuple[VisitRow, ...], ...] = ()
    study_end: Optional[date] = None
    _index: Dict[str, int] = field(default_factory=dict, repr=False,
                                   compare=False)

    def __post_init__(self):
        """Check identifiers and build the patient index."""
        index = {}
        for position, rows in enumerate(self.patients):
            if not rows:
                raise DatasetValidationError('patient without visits')
            patient_id = rows[0].patient_id
            if patient_id in index:
                raise DatasetValidationError(
                    f'patient {patient_id} appears in two groups')
            seen = set()
            for row in rows:
                if row.patient_id != patient_id:
                    raise DatasetValidationError(
                        f'row of patient {row.patient_id} grouped under '
                        f'patient {patient_id}')
                if row.visit_index in seen:
                    raise DatasetValidationError(
                        f'duplicate visit {row.visit_index} for patient '
                        f'{patient_id}')
                seen.add(row.visit_index)
            index[patient_id] = position
        self._index.clear()
        self._index.update(index)

    def __len__(self):
        return len(self.patients)

    def __iter__(self):
        return iter(self.patients)

    @property
    def patient_ids(self):
        """Return the patient identifiers in dataset order."""
        return [rows[0].patient_id for rows in self.patients]

    @property
    def n_visits(self):
        """Return the total number of visits."""
        return sum(len(rows) for rows in self.patients)

    def rows(self):
        """Iterate over every visit, patient by patient."""
        for patient_rows in self.patients:
            yield from patient_rows

    def patient(self, patient_id):
        """Return the visits of one patient."""
        return self.patients[self._index[str(patient_id)]]

    def to_frame(self):
        """Return one row per visit as a :class:`pandas.DataFrame`.

        Missing values are NaN; dates are kept as objects.
        """
        records = [{'patient_id': row.patient_id,
                    'visit_index': row.visit_index,
                    'date': row.calendar_date,
                    'time_since_dx': row.time_since_dx,
                    'das': _nan(row.das),
                    'gap_forward': _nan(row.gap_forward),
                    'censored': row.censored,
                    'rec_interval': _nan(row.rec_interval),
                    'das_diff_forward': _nan(row.das_diff_forward),
                    'das_increase_forward': _nan(row.das_increase_forward)}
                   for row in self.rows()]
        columns = ['patient_id', 'visit_index', 'date', 'time_since_dx',
                   'das', 'gap_forward', 'censored', 'rec_interval',
                   'das_diff_forward', 'das_increase_forward']
        return pd.DataFrame.from_records(records, columns=columns)


def _nan(value):
    return np.nan if value is None else value


def convert_interval(value, unit):
    """Convert an interval to months.

    Args:
        value (float): non-negative interval length.
        unit (str): one of ``days``, ``weeks`` or ``months``.

    Returns:
        float: the interval in months.

    """
    if value < 0:
        raise DatasetValidationError(f'negative interval {value} {unit}')
    if unit == 'months':
        return float(value)
    if unit == 'weeks':
        return value / UNITS.weeks_per_month
    if unit == 'days':
        return value / UNITS.days_per_month
    raise DatasetValidationError(f'unknown interval unit {unit!r}')


def derive_diffs(dataset):
    """Populate the forward outcome change of every visit.

    For a visit followed by another visit of the same patient, with DAS
    present at both, ``das_diff_forward`` is the next DAS minus this DAS and
    ``das_increase_forward`` its positive part. Both are absent otherwise.

    Args:
        dataset (Dataset): visits sorted per patient.

    Returns:
        Dataset: a new dataset with the derived fields set.

    """
    patients = []
    for rows in dataset.patients:
        derived = []
        for position, row in enumerate(rows):
            diff = None
            if position + 1 < len(rows):
                following = rows[position + 1].das
                if row.das is not None and following is not None:
                    diff = following - row.das
            derived.append(replace(
                row, das_diff_forward=diff,
                das_increase_forward=None if diff is None else max(diff, 0.0)))
        patients.append(tuple(derived))
    return Dataset(tuple(patients), study_end=dataset.study_end)


def parse_dataset(csv_text, options=None):
    """Parse and validate a visit table.

    Args:
        csv_text (str): CSV content with the header of :data:`COLUMNS`.
        options (ParseOptions): parsing options.

    Returns:
        Dataset: visits grouped per patient in file order (times must
        strictly increase), with ``visit_index`` assigned and derived
        fields populated.

    """
    options = options or ParseOptions()
    try:
        frame = pd.read_csv(io.StringIO(csv_text), dtype=str,
                            keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise DatasetValidationError('empty input, header expected', line=1)
    except pd.errors.ParserError as exc:
        raise DatasetValidationError(f'malformed CSV: {exc}')

    missing = [column for column in COLUMNS if column not in frame.columns]
    if missing:
        raise DatasetValidationError(
            f'missing columns: {", ".join(missing)}', line=1)

    grouped = {}
    for position, record in enumerate(frame.to_dict('records')):
        line = position + 2
        row = _parse_row(record, line, options)
        grouped.setdefault(row.patient_id, []).append((row, line))

    patients = [_build_patient(entries, options)
                for entries in grouped.values()]
    dataset = Dataset(tuple(patients), study_end=options.study_end)
    LOG.info('Parsed %d visits of %d patients.', dataset.n_visits,
             len(dataset))
    return derive_diffs(dataset)


def _parse_row(record, line, options):
    """Turn one CSV record into an unindexed VisitRow."""
    patient_id = record['id'].strip()
    if not patient_id:
        raise DatasetValidationError('empty patient id', line=line)
    try:
        calendar_date = get_date(record['date'])
    except ValueError:
        raise DatasetValidationError(
            f'invalid date {record["date"]!r}', line=line)
    time_since_dx = _parse_float(record, 'time_since_dx', line)
    if time_since_dx is None:
        raise DatasetValidationError('time_since_dx is required', line=line)
    if time_since_dx < 0:
        raise DatasetValidationError(
            f'negative time_since_dx {time_since_dx}', line=line)

    das = _parse_float(record, 'DAS', line)
    if das is not None:
        if options.das_range is not None and \
                not options.das_range[0] <= das <= options.das_range[1]:
            lower, upper = options.das_range
            raise DatasetValidationError(
                f'DAS {das:g} outside [{lower:g}, {upper:g}]', line=line)
        if options.strict_integer_das and das != int(das):
            raise DatasetValidationError(f'non-integer DAS {das}', line=line)

    gap = _parse_float(record, 'S', line)
    if gap is not None and gap < 0:
        raise DatasetValidationError(f'negative S {gap}', line=line)
    rec_interval = _parse_float(record, 'R', line)
    if rec_interval is not None and rec_interval <= 0:
        raise DatasetValidationError(
            f'recommended interval must be positive, got {rec_interval}',
            line=line)

    censor = record['censor'].strip()
    if censor not in ('0', '1'):
        raise DatasetValidationError(
            f'censor must be 0 or 1, got {censor!r}', line=line)

    return VisitRow(patient_id=patient_id, visit_index=-1,
                    time_since_dx=time_since_dx, calendar_date=calendar_date,
                    das=das, gap_forward=gap, censored=censor == '1',
                    rec_interval=rec_interval)


def _parse_float(record, column, line):
    text = record[column].strip()
    if not text or text.upper() == 'NA':
        return None
    try:
        value = float(text)
    except ValueError:
        raise DatasetValidationError(
            f'{column} is not a number: {text!r}', line=line)
    if not math.isfinite(value):
        raise DatasetValidationError(f'{column} is not finite', line=line)
    return value


def _build_patient(entries, options):
    """Index and check the visits of one patient in file order."""
    rows = []
    for position, (row, line) in enumerate(entries):
        is_last = position == len(entries) - 1
        if position > 0:
            previous = entries[position - 1][0]
            if row.time_since_dx <= previous.time_since_dx:
                raise DatasetValidationError(
                    f'time_since_dx not strictly increasing for patient '
                    f'{row.patient_id}: {row.time_since_dx:g} at row '
                    f'{position + 1} follows {previous.time_since_dx:g}',
                    line=line)
        if row.censored and not is_last:
            raise DatasetValidationError(
                f'censor=1 on a non-final visit of patient {row.patient_id}',
                line=line)
        gap = row.gap_forward
        if not is_last:
            implied = ((entries[position + 1][0].time_since_dx -
                        row.time_since_dx) * MONTHS_PER_YEAR)
            if gap is None:
                gap = implied
            else:
                _check_gap(gap, implied, row, line, options)
        elif gap is None and row.censored:
            gap = _gap_to_study_end(row, options.study_end)
        rows.append(replace(row, visit_index=position, gap_forward=gap))
    return tuple(rows)


def _check_gap(gap, implied, row, line, options):
    """Compare a supplied S with the gap implied by the visit times."""
    scale = max(abs(gap), abs(implied))
    if scale == 0 or abs(gap - implied) <= options.gap_tolerance * scale:
        return
    message = (f'S={gap} disagrees with the time_since_dx gap '
               f'{implied:.6g} months for patient {row.patient_id}')
    if options.strict_gaps:
        raise DatasetValidationError(message, line=line)
    LOG.warning('line %d: %s; keeping the supplied S.', line, message)


def _gap_to_study_end(row, study_end):
    if study_end is None or row.calendar_date is None:
        return None
    days = (study_end - row.calendar_date).days
    if days <= 0:
        return None
    return convert_interval(days, 'days')


def dataset_to_csv(dataset):
    """Write a dataset in the seven-column input format.

    Args:
        dataset (Dataset): visits to write.

    Returns:
        str: CSV text that :func:`parse_dataset` reads back.

    """
    frame = pd.DataFrame({
        'id': [row.patient_id for row in dataset.rows()],
        'date': [row.calendar_date.isoformat() if row.calendar_date else ''
                 for row in dataset.rows()],
        'time_since_dx': [_format(row.time_since_dx)
                          for row in dataset.rows()],
        'DAS': [_format(row.das) for row in dataset.rows()],
        'S': [_format(row.gap_forward) for row in dataset.rows()],
        'censor': [str(int(row.censored)) for row in dataset.rows()],
        'R': [_format(row.rec_interval) for row in dataset.rows()],
    }, columns=list(COLUMNS))
    return frame.to_csv(index=False, lineterminator='\n')


def _format(value):
    """Shortest text that parses back to the same float."""
    if value is None:
        return ''
    if float(value).is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))
