"""Test visitweight.core.dataset module."""
from datetime import date
from unittest import TestCase
from unittest.mock import patch

from visitweight.core.dataset import (ParseOptions, convert_interval,
                                      dataset_to_csv, derive_diffs,
                                      parse_dataset)
from visitweight.core.exceptions import DatasetValidationError
from visitweight.lib.helpers import (FAKEDAT_CSV, SMALL_COHORT_CSV,
                                     get_fakedat_dataset, get_small_cohort)

HEADER = 'id,date,time_since_dx,DAS,S,censor,R\n'


class TestParseDataset(TestCase):
    """Test the ingestion of visit tables."""

    def test_fakedat_rows(self):
        """The extract gives one patient with six indexed visits."""
        dataset = get_fakedat_dataset()
        rows = dataset.patient('1')

        self.assertEqual(len(dataset), 1)
        self.assertEqual([row.visit_index for row in rows], list(range(6)))
        self.assertEqual(rows[0].calendar_date, date(2009, 5, 13))
        self.assertIsNone(rows[3].das)
        self.assertIsNone(rows[4].rec_interval)
        self.assertAlmostEqual(rows[5].gap_forward, 4.60)

    def test_fakedat_derived_diffs(self):
        """Forward differences need DAS at both visits."""
        rows = get_fakedat_dataset().patient('1')
        diffs = [row.das_diff_forward for row in rows]
        increases = [row.das_increase_forward for row in rows]

        self.assertEqual(diffs, [0.0, -3.0, None, None, -2.0, None])
        self.assertEqual(increases, [0.0, 0.0, None, None, 0.0, None])

    def test_derive_diffs_idempotent(self):
        """Deriving the differences again changes nothing."""
        for dataset in (get_fakedat_dataset(), get_small_cohort()):
            with self.subTest(n_visits=dataset.n_visits):
                self.assertEqual(derive_diffs(dataset), dataset)
                self.assertEqual(derive_diffs(derive_diffs(dataset)),
                                 dataset)

    @patch('visitweight.core.dataset.LOG')
    def test_gap_mismatch_warns(self, mock_log):
        """A supplied S that disagrees with the times is kept with a warning.
        """
        rows = get_fakedat_dataset().patient('1')

        self.assertEqual(rows[1].gap_forward, 0.46)
        lines = [call[1][1] for call in mock_log.warning.mock_calls]
        self.assertIn(3, lines)

    def test_gap_mismatch_strict(self):
        """With strict gaps the first disagreeing line is reported."""
        with self.assertRaises(DatasetValidationError) as exc:
            get_fakedat_dataset(strict_gaps=True)

        self.assertEqual(exc.exception.line, 3)
        self.assertIn('disagrees', str(exc.exception))

    def test_loose_gap_tolerance(self):
        """A wide tolerance accepts the rounded gaps silently."""
        with patch('visitweight.core.dataset.LOG') as mock_log:
            get_fakedat_dataset(gap_tolerance=0.01, strict_gaps=True)
        mock_log.warning.assert_not_called()

    def test_missing_columns(self):
        """A header without the required columns fails on line 1."""
        with self.assertRaises(DatasetValidationError) as exc:
            parse_dataset('id,date,time_since_dx,DAS\n1,,0,3\n')

        self.assertEqual(exc.exception.line, 1)
        self.assertIn('S, censor, R', str(exc.exception))

    def test_censor_on_non_final_visit(self):
        """Only the last visit of a patient may be censored."""
        text = HEADER + '1,,0.0,3,1.2,1,2\n1,,0.1,4,,0,2\n'
        with self.assertRaises(DatasetValidationError) as exc:
            parse_dataset(text)

        self.assertEqual(exc.exception.line, 2)

    def test_repeated_times(self):
        """Two visits at the same time are rejected."""
        text = HEADER + '1,,0.5,3,,0,2\n1,,0.5,4,,0,2\n'
        with self.assertRaises(DatasetValidationError) as exc:
            parse_dataset(text)

        self.assertIn('not strictly increasing', str(exc.exception))

    def test_decreasing_times(self):
        """Times going backwards in the file are rejected, not reordered."""
        text = HEADER + '1,,0.5,4,,0,2\n1,,0.25,3,,0,2\n1,,0.0,3,,0,2\n'
        with self.assertRaises(DatasetValidationError) as exc:
            parse_dataset(text)

        self.assertEqual(exc.exception.line, 3)
        self.assertIn('patient 1', str(exc.exception))
        self.assertIn('not strictly increasing', str(exc.exception))

    def test_das_range(self):
        """DAS outside [0, 12] fails unless the range is disabled."""
        text = HEADER + '1,,0.0,13.5,,0,2\n'
        with self.assertRaises(DatasetValidationError) as exc:
            parse_dataset(text)
        self.assertEqual(exc.exception.line, 2)

        dataset = parse_dataset(text, ParseOptions(das_range=None))
        self.assertEqual(dataset.patient('1')[0].das, 13.5)

    def test_strict_integer_das(self):
        """Fractional DAS is only rejected in strict mode."""
        text = HEADER + '1,,0.0,3.5,,0,2\n'
        self.assertEqual(parse_dataset(text).patient('1')[0].das, 3.5)
        with self.assertRaises(DatasetValidationError):
            parse_dataset(text, ParseOptions(strict_integer_das=True))

    def test_invalid_values(self):
        """Bad numbers, censor flags and recommended intervals fail."""
        bad_rows = ['1,,0.0,x,,0,2\n', '1,,0.0,3,,2,2\n', '1,,0.0,3,,0,0\n',
                    '1,,0.0,3,-1,0,2\n', '1,,-0.1,3,,0,2\n',
                    '1,2009-13-01,0.0,3,,0,2\n', ',,0.0,3,,0,2\n']
        for row in bad_rows:
            with self.subTest(row=row):
                with self.assertRaises(DatasetValidationError) as exc:
                    parse_dataset(HEADER + row)
                self.assertEqual(exc.exception.line, 2)

    def test_na_is_missing(self):
        """NA and empty fields are both missing values."""
        text = HEADER + '1,,0.0,NA,,0,NA\n'
        row = parse_dataset(text).patient('1')[0]

        self.assertIsNone(row.das)
        self.assertIsNone(row.rec_interval)
        self.assertIsNone(row.gap_forward)

    def test_gap_derived_from_times(self):
        """An empty S between visits comes from time_since_dx."""
        rows = parse_dataset(SMALL_COHORT_CSV).patient('1')

        self.assertAlmostEqual(rows[3].gap_forward, 6.0)
        self.assertIsNone(rows[4].gap_forward)

    def test_censored_gap_from_study_end(self):
        """A censored last visit without S runs to the end of the study."""
        text = HEADER + '1,2009-01-01,0.0,3,,0,2\n1,2009-03-01,0.16,4,,1,2\n'
        options = ParseOptions(study_end=date(2009, 4, 1))
        rows = parse_dataset(text, options).patient('1')

        self.assertTrue(rows[1].censored)
        self.assertAlmostEqual(rows[1].gap_forward, 31 / 30.417)
        self.assertIsNone(parse_dataset(text).patient('1')[1].gap_forward)

    def test_patients_keep_input_order(self):
        """Patients are grouped in order of first appearance."""
        dataset = parse_dataset(SMALL_COHORT_CSV)

        self.assertEqual(dataset.patient_ids, ['1', '2', '3'])
        self.assertEqual(dataset.n_visits, 13)

    def test_csv_round_trip(self):
        """Written datasets parse back to the same visits."""
        dataset = get_fakedat_dataset()
        again = parse_dataset(dataset_to_csv(dataset))

        self.assertEqual(list(again.rows()), list(dataset.rows()))

    def test_to_frame(self):
        """The frame has one row per visit with NaN for missing values."""
        frame = get_fakedat_dataset().to_frame()

        self.assertEqual(len(frame), 6)
        self.assertTrue(frame['das'].isna()[3])
        self.assertEqual(frame['das_diff_forward'].iloc[1], -3.0)

    def test_empty_input(self):
        """An empty file has no header."""
        with self.assertRaises(DatasetValidationError) as exc:
            parse_dataset('')
        self.assertEqual(exc.exception.line, 1)

    def test_header_only(self):
        """A header without rows is an empty dataset."""
        dataset = parse_dataset(FAKEDAT_CSV.splitlines()[0] + '\n')
        self.assertEqual(len(dataset), 0)


class TestConvertInterval(TestCase):
    """Test the unit conversion of intervals."""

    def test_units(self):
        """Weeks and days are converted to months."""
        self.assertEqual(convert_interval(3, 'months'), 3.0)
        self.assertAlmostEqual(convert_interval(4.345, 'weeks'), 1.0)
        self.assertAlmostEqual(convert_interval(2, 'weeks'), 2 / 4.345)
        self.assertAlmostEqual(convert_interval(30.417, 'days'), 1.0)

    def test_invalid(self):
        """Negative values and unknown units are rejected."""
        with self.assertRaises(DatasetValidationError):
            convert_interval(-1, 'days')
        with self.assertRaises(DatasetValidationError):
            convert_interval(1, 'years')
