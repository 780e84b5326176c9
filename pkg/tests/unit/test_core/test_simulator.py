"""Test visitweight.core.simulator module."""
from dataclasses import replace
from datetime import date
from unittest import TestCase

import numpy as np
import pandas as pd
import pytest

from visitweight.core.dataset import dataset_to_csv, parse_dataset
from visitweight.core.exceptions import SimulationError
from visitweight.core.intensity import (build_risk_table, compute_weights,
                                        fit_intensity_models)
from visitweight.core.outcome import fit_outcome, trajectory_auc
from visitweight.core.sensitivity import GridSpec, run_grid
from visitweight.core.simulator import (Mechanism, ScenarioSpec, simulate,
                                        true_mean)
from visitweight.core.tilt import (TiltConfig, compute_tilted_weights,
                                   fit_normalizers)

SMALL = ScenarioSpec(n_patients=12, horizon=2.0, seed=11)


class TestScenarioSpec(TestCase):
    """Test the scenario parameters."""

    def test_invalid(self):
        """Impossible scenarios are rejected."""
        with self.assertRaises(SimulationError):
            ScenarioSpec(n_patients=0)
        with self.assertRaises(SimulationError):
            ScenarioSpec(noise_sd=-1.0)
        with self.assertRaises(SimulationError):
            ScenarioSpec(rule=((2.0, 3.0), (4.0, 2.0)))
        with self.assertRaises(SimulationError):
            ScenarioSpec(flare_bump_low=7.0, flare_bump_high=6.0)

    def test_rule_interval(self):
        """The first threshold reached gives R."""
        spec = ScenarioSpec()

        self.assertEqual(spec.rule_interval(8.0), 1.0)
        self.assertEqual(spec.rule_interval(7.0), 1.0)
        self.assertEqual(spec.rule_interval(5.0), 2.0)
        self.assertEqual(spec.rule_interval(2.0), 3.0)
        self.assertEqual(spec.rule_interval(1.0), 6.0)

    def test_from_config_text(self):
        """A flat file overrides the defaults."""
        spec = ScenarioSpec.from_config(
            'mechanism = ANAR\nn_patients = 20\nround_das = no\n'
            'rule = 5:1,2:4\nstart_date = 2010-02-01\n')

        self.assertIs(spec.mechanism, Mechanism.ANAR)
        self.assertEqual(spec.n_patients, 20)
        self.assertFalse(spec.round_das)
        self.assertEqual(spec.rule, ((5.0, 1.0), (2.0, 4.0)))
        self.assertEqual(spec.start_date, date(2010, 2, 1))
        self.assertEqual(spec.horizon, 7.0)

    def test_from_config_section(self):
        """A file with a [scenario] section is read as is."""
        spec = ScenarioSpec.from_config('# cohort\n[scenario]\nseed = 9\n')

        self.assertEqual(spec.seed, 9)

    def test_from_config_errors(self):
        """Unknown keys and bad values are rejected."""
        with self.assertRaises(SimulationError):
            ScenarioSpec.from_config('n_patient = 20\n')
        with self.assertRaises(SimulationError):
            ScenarioSpec.from_config('n_patients = many\n')
        with self.assertRaises(SimulationError):
            ScenarioSpec.from_config('mechanism = mnar\n')


class TestSimulate(TestCase):
    """Test the generated cohorts."""

    def test_jobs_do_not_change_output(self):
        """Per-patient streams make the cohort independent of jobs."""
        serial = simulate(SMALL, jobs=1, truth_draws=100)
        threaded = simulate(SMALL, jobs=4, truth_draws=100)

        pd.testing.assert_frame_equal(serial.dataset.to_frame(),
                                      threaded.dataset.to_frame())

    def test_seed_changes_output(self):
        """Another seed gives another cohort."""
        first = simulate(SMALL, truth_draws=100).dataset.to_frame()
        other = simulate(replace(SMALL, seed=12),
                         truth_draws=100).dataset.to_frame()

        self.assertFalse(first['time_since_dx'].equals(
            other['time_since_dx']))

    def test_last_visit_censored(self):
        """Only the last visit of a patient is censored at the horizon."""
        dataset = simulate(SMALL, truth_draws=100).dataset

        self.assertEqual(len(dataset), 12)
        for patient_id in dataset.patient_ids:
            rows = dataset.patient(patient_id)
            self.assertTrue(rows[-1].censored)
            self.assertFalse(any(row.censored for row in rows[:-1]))
            self.assertAlmostEqual(
                rows[-1].gap_forward, (2.0 - rows[-1].time_since_dx) * 12)
            self.assertEqual(rows[0].time_since_dx, 0.0)

    def test_recorded_outcome(self):
        """Recorded DAS values are rounded into [0, 12]."""
        frame = simulate(SMALL, truth_draws=100).dataset.to_frame()

        self.assertTrue((frame['das'] == np.round(frame['das'])).all())
        self.assertTrue(frame['das'].between(0, 12).all())
        self.assertTrue(frame['rec_interval'].isin([1.0, 2.0, 3.0,
                                                    6.0]).all())

    def test_acar_interval(self):
        """Under ACAR every R is the fixed interval."""
        spec = replace(SMALL, mechanism=Mechanism.ACAR, acar_interval=4.0)
        frame = simulate(spec, truth_draws=100).dataset.to_frame()

        self.assertTrue((frame['rec_interval'] == 4.0).all())

    def test_no_flares_is_aar(self):
        """ANAR without flares generates the AAR cohort."""
        aar = simulate(SMALL, truth_draws=100)
        anar = simulate(replace(SMALL, mechanism=Mechanism.ANAR,
                                flare_rate=0.0), truth_draws=100)

        pd.testing.assert_frame_equal(aar.dataset.to_frame(),
                                      anar.dataset.to_frame())

    def test_csv_parses(self):
        """The written dataset is a valid input file."""
        dataset = simulate(SMALL, truth_draws=100).dataset
        parsed = parse_dataset(dataset_to_csv(dataset))

        self.assertEqual(parsed.n_visits, dataset.n_visits)
        np.testing.assert_array_equal(
            parsed.to_frame()['gap_forward'],
            dataset.to_frame()['gap_forward'])


class TestTrueMean(TestCase):
    """Test the known truth of a scenario."""

    def test_closed_form(self):
        """Without rounding and clamping the truth is mu(t)."""
        spec = replace(SMALL, round_das=False, clamp_das=False)
        truth = true_mean(spec, times=[0.0, 1.0])

        self.assertEqual(truth.method, 'closed_form')
        np.testing.assert_allclose(truth.mean, [7.0, 1 + 6 * np.exp(-1.2)])
        self.assertIsNone(truth.std_error)

    def test_flare_mean(self):
        """Flares add their mean level to the closed form."""
        spec = replace(SMALL, mechanism=Mechanism.ANAR, round_das=False,
                       clamp_das=False)
        truth = true_mean(spec, times=[0.0, 2.0])
        decay = 2.0 / 12
        expected = 1 + 6 * np.exp(-2.4) + 4.5 * decay * (1 -
                                                         np.exp(-2.0 / decay))

        self.assertAlmostEqual(truth.mean[0], 7.0)
        self.assertAlmostEqual(truth.mean[1], expected)

    def test_monte_carlo(self):
        """Rounded outcomes are averaged over independent draws."""
        truth = true_mean(SMALL, times=[0.0, 1.0], draws=4000)

        self.assertEqual(truth.method, 'monte_carlo')
        self.assertEqual(truth.std_error.shape, (2,))
        self.assertLess(abs(truth.mean[0] - 7.0), 0.2)
        self.assertTrue(np.all(truth.std_error > 0))

    def test_default_grid(self):
        """The default grid runs to the horizon by 0.1."""
        truth = true_mean(replace(SMALL, round_das=False, clamp_das=False))

        self.assertEqual(len(truth.times), 21)
        self.assertEqual(list(truth.to_frame().columns),
                         ['time', 'mean_das', 'std_error', 'method'])


@pytest.mark.large
class TestAarRecovery(TestCase):
    """Test that the weights remove the visit process bias."""

    @classmethod
    def setUpClass(cls):
        """Simulate 500 patients over 7 years and fit the AAR weights."""
        cls.output = simulate(ScenarioSpec(n_patients=500, seed=3), jobs=4,
                              truth_draws=20000)
        cls.model_set = fit_intensity_models(
            build_risk_table(cls.output.dataset), {}, strict=False)
        cls.weights = compute_weights(cls.output.dataset, cls.model_set)

    def test_weighted_auc_recovers_truth(self):
        """The weighted AUC is within 3% of the truth and beats unweighted."""
        dataset = self.output.dataset
        truth = self.output.truth.auc()
        weighted = trajectory_auc(fit_outcome(dataset, self.weights))
        unweighted = trajectory_auc(fit_outcome(dataset, self.weights,
                                                unweighted=True))

        self.assertLess(abs(weighted - truth), 0.03 * truth)
        self.assertLess(abs(weighted - truth), abs(unweighted - truth))

    def test_untilted_weights_are_aar(self):
        """Zero alphas reproduce the AAR weights on a large cohort."""
        config = TiltConfig()
        normalizers = fit_normalizers(self.output.dataset, config)
        tilted = compute_tilted_weights(self.output.dataset, self.model_set,
                                        normalizers, config)

        self.assertLess(tilted.max_relative_difference(self.weights), 1e-12)


@pytest.mark.large
class TestAnarGrid(TestCase):
    """Test the sensitivity grid on flare-driven early visits."""

    @classmethod
    def setUpClass(cls):
        """Simulate the ANAR cohort and run the default grid."""
        spec = ScenarioSpec(mechanism=Mechanism.ANAR, n_patients=300,
                            seed=5)
        cls.output = simulate(spec, jobs=4, truth_draws=5000)
        cls.model_set = fit_intensity_models(
            build_risk_table(cls.output.dataset), {}, strict=False)
        cls.grid_spec = GridSpec()
        cls.grid = run_grid(cls.output.dataset, cls.model_set,
                            spec=cls.grid_spec, jobs=4)

    def test_grid_complete(self):
        """Every cell of the 15 x 15 grid is computed."""
        self.assertEqual(self.grid.auc.shape, (15, 15))
        self.assertFalse(self.grid.is_partial)

    def test_early_tilt_lowers_auc(self):
        """The AUC does not increase along alpha_e at alpha_l = 0."""
        along_early = self.grid.auc[:, 0]

        self.assertTrue(np.all(np.diff(along_early) <= 1e-9))
        self.assertLess(self.grid.auc_at(7, 0), self.grid.auc_at(0, 0))

    def test_early_tilt_approaches_truth(self):
        """Some tilted cell is closer to the truth than the AAR cell."""
        distance = np.abs(self.grid.auc - self.output.truth.auc())

        self.assertLess(np.min(distance[1:, :]), distance[0, 0])

    def test_late_tilt_matters_less(self):
        """Moving alpha_l changes the AUC at most a fifth as much."""
        early_change = abs(self.grid.auc_at(7, 0) - self.grid.auc_at(0, 0))
        late_change = abs(self.grid.auc_at(0, 7) - self.grid.auc_at(0, 0))

        self.assertLessEqual(late_change, 0.2 * early_change)

    def test_in_window_weights_fixed(self):
        """In-window arrivals keep their AAR weight in every cell."""
        dataset = self.output.dataset
        aar = compute_weights(dataset, self.model_set).frame
        in_window = (aar['arrival_category'] == 'in_window').to_numpy()
        self.assertTrue(in_window.any())
        for alpha_e, alpha_l in self.grid_spec.cells():
            config = TiltConfig(alpha_e=alpha_e, alpha_l=alpha_l)
            tilted = compute_tilted_weights(
                dataset, self.model_set, fit_normalizers(dataset, config),
                config).frame
            with self.subTest(alpha_e=alpha_e, alpha_l=alpha_l):
                np.testing.assert_array_equal(
                    tilted['weight'].to_numpy()[in_window],
                    aar['weight'].to_numpy()[in_window])
