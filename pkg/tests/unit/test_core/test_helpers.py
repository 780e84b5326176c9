"""Test visitweight.core.helpers module."""
from datetime import date, datetime
from unittest import TestCase
from unittest.mock import patch

import numpy as np

from visitweight.core.helpers import float_range, get_date, parallel_map


class TestHelpers(TestCase):
    """Test the helpers methods."""

    @staticmethod
    @patch('visitweight.core.helpers.ThreadPoolExecutor')
    def test_parallel_map_inline(mock_pool):
        """A single job must not start a thread pool."""
        parallel_map(abs, [-1, -2], jobs=1)

        mock_pool.assert_not_called()

    def test_parallel_map_keeps_order(self):
        """Results come back in input order whatever the job count."""
        items = list(range(20))
        self.assertEqual(parallel_map(lambda x: x * x, items, jobs=4),
                         [x * x for x in items])

    def test_float_range_inclusive(self):
        """The stop value is part of the grid."""
        grid = float_range(0.0, 7.0, 0.007)

        self.assertEqual(len(grid), 1001)
        self.assertAlmostEqual(grid[-1], 7.0)
        np.testing.assert_allclose(float_range(0.0, 7.0, 0.5),
                                   np.arange(15) * 0.5)

    def test_float_range_invalid(self):
        """Non-positive steps and reversed ranges are errors."""
        with self.assertRaises(ValueError):
            float_range(0, 1, 0)
        with self.assertRaises(ValueError):
            float_range(1, 0, 0.5)

    def test_get_date__str(self):
        """Test get_date method passing a string as parameter."""
        self.assertEqual(get_date("2009-05-13"), date(2009, 5, 13))
        self.assertEqual(get_date("2009-05-13T10:30:00"), date(2009, 5, 13))

    def test_get_date__datetime(self):
        """Test get_date method passing a datetime as parameter."""
        self.assertEqual(get_date(datetime(2010, 2, 10, 8, 0)),
                         date(2010, 2, 10))

    def test_get_date__none(self):
        """Test get_date method by not passing a parameter."""
        self.assertIsNone(get_date())
        self.assertIsNone(get_date('  '))
