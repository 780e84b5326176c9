"""Test visitweight.core.cli module."""
import json
import tempfile
from pathlib import Path
from unittest import TestCase
from unittest.mock import patch

import pandas as pd

from tests.helper import run_cli, write_input
from visitweight.core.exceptions import NormalizerError
from visitweight.core.tilt import compute_tilted_weights
from visitweight.lib.helpers import FAKEDAT_CSV, SMALL_COHORT_CSV

# intercept-only intensities and a linear outcome fit the small cohort
SMALL_MODELS = ('--out-of-window-df', '0', '--in-window-df', '0',
                '--time-df', '1')
SMALL_GRID = ('--alpha-e-stop', '1', '--alpha-e-step', '1',
              '--alpha-l-stop', '1', '--alpha-l-step', '1',
              '--normalizer-df', '0')


class TestMain(TestCase):
    """Test the subcommands and their exit codes."""

    def setUp(self):
        """Create the run directory and the input files."""
        self._tmp = tempfile.TemporaryDirectory()
        self.directory = Path(self._tmp.name)
        self.out = self.directory / 'run'
        self.small = write_input(self.directory, SMALL_COHORT_CSV)
        self.fakedat = write_input(self.directory, FAKEDAT_CSV,
                                   name='fakedat.csv')

    def tearDown(self):
        """Remove the run directory."""
        self._tmp.cleanup()

    def run_command(self, *argv):
        """Run a subcommand into the run directory."""
        return run_cli(*argv, '-o', str(self.out))

    def read_json(self, name):
        """Return a JSON artifact of the run."""
        return json.loads((self.out / name).read_text(encoding='utf-8'))

    def test_validate(self):
        """A valid dataset is summarized."""
        self.assertEqual(self.run_command('validate', self.small), 0)

        summary = self.read_json('validation.json')
        self.assertEqual(summary, {'valid': True, 'n_patients': 3,
                                   'n_visits': 13, 'n_censored': 1})
        self.assertTrue((self.out / 'effective.conf').exists())
        self.assertTrue((self.out / 'logging.ini').exists())

    def test_invalid_dataset(self):
        """Validation errors exit with 2."""
        broken = write_input(self.directory, SMALL_COHORT_CSV.replace(
            '1,,0.1,7,2.4,0,2', '1,,0.1,7,2.4,2,2'), name='broken.csv')

        self.assertEqual(self.run_command('validate', broken), 2)
        backwards = write_input(
            self.directory, 'id,date,time_since_dx,DAS,S,censor,R\n'
            '1,,0.5,4,,0,2\n1,,0.25,3,,0,2\n1,,0.0,3,,0,2\n',
            name='backwards.csv')
        self.assertEqual(self.run_command('validate', backwards), 2)
        self.assertEqual(self.run_command(
            'validate', str(self.directory / 'missing.csv')), 2)
        self.assertEqual(self.run_command('validate'), 2)

    def test_invalid_config(self):
        """Invalid options exit with 2 before any output."""
        self.assertEqual(self.run_command('validate', self.small, '--jobs',
                                          '0'), 2)
        self.assertFalse(self.out.exists())

    def test_classify(self):
        """Every gap gets its category and time at risk."""
        self.assertEqual(self.run_command('classify', self.fakedat), 0)

        frame = pd.read_csv(self.out / 'classification.csv',
                            keep_default_na=False)
        self.assertEqual(len(frame), 6)
        self.assertEqual(list(frame['category']),
                         ['in_window', 'in_window', 'early', 'in_window',
                          '', 'very_late'])
        self.assertEqual(list(frame['valid']), [1, 1, 1, 1, 0, 1])

    def test_diagnose(self):
        """The report and both band scales are written."""
        self.assertEqual(self.run_command('diagnose', self.small), 0)

        report = self.read_json('diagnostics.json')
        self.assertEqual(report['n_patients'], 3)
        self.assertEqual(report['categories']['n_gaps'], 10)
        bands = pd.read_csv(self.out / 'bands.csv')
        self.assertEqual(sorted(bands['scale'].unique()),
                         ['difference', 'ratio'])

    def test_fit_aar(self):
        """The weighted and unweighted fits are summarized."""
        self.assertEqual(self.run_command('fit-aar', self.small,
                                          *SMALL_MODELS), 0)

        summary = self.read_json('summary.json')
        self.assertEqual(summary['label'], 'aar')
        self.assertEqual(sorted(summary['aucs']), ['aar', 'unweighted'])
        self.assertEqual(summary['auc_rounded'], round(summary['auc'], 1))
        self.assertEqual(summary['n_patients'], 3)
        trajectories = pd.read_csv(self.out / 'trajectories.csv')
        self.assertEqual(len(trajectories), 142)
        weights = pd.read_csv(self.out / 'weights.csv')
        self.assertEqual(len(weights), 13)
        models = pd.read_csv(self.out / 'intensity_models.csv')
        self.assertTrue((models['status'] == 'ok').all())

    def test_fit_unweighted(self):
        """The unweighted option fits with unit weights only."""
        self.assertEqual(self.run_command('fit-aar', self.small,
                                          *SMALL_MODELS, '--unweighted'), 0)

        self.assertEqual(self.read_json('summary.json')['label'],
                         'unweighted')

    def test_numerical_failure(self):
        """Too few visits for the outcome basis exit with 3."""
        self.assertEqual(self.run_command('fit-aar', self.fakedat), 3)

    def test_sensitivity(self):
        """The heatmap has one line per cell."""
        self.assertEqual(self.run_command('sensitivity', self.small,
                                          *SMALL_MODELS, *SMALL_GRID), 0)

        heatmap = pd.read_csv(self.out / 'heatmap.csv')
        self.assertEqual(len(heatmap), 4)
        self.assertTrue((heatmap['status'] == 'ok').all())
        trajectories = pd.read_csv(self.out / 'trajectories.csv')
        self.assertEqual(len(trajectories), 71)

    def test_partial_grid(self):
        """A failing cell exits with 4 and keeps the others."""
        def failing(dataset, model_set, normalizers, config, **kwargs):
            if config.alpha_e == 1:
                raise NormalizerError('normalizer non-positive')
            return compute_tilted_weights(dataset, model_set, normalizers,
                                          config, **kwargs)

        with patch('visitweight.core.sensitivity.compute_tilted_weights',
                   side_effect=failing):
            code = self.run_command('sensitivity', self.small,
                                    *SMALL_MODELS, *SMALL_GRID)

        self.assertEqual(code, 4)
        heatmap = pd.read_csv(self.out / 'heatmap.csv')
        self.assertEqual(list(heatmap['status'] == 'ok'),
                         [True, True, False, False])

    def test_elicit(self):
        """Curves and the plausible range are written."""
        self.assertEqual(self.run_command('elicit', self.small,
                                          *SMALL_MODELS, '--no-normalizer',
                                          '--elicitation-alphas', '0,3'), 0)

        curves = pd.read_csv(self.out / 'elicitation.csv')
        self.assertEqual(len(curves), 3 * 2 * 101)
        plausible = self.read_json('plausible_range.json')
        self.assertLess(plausible['alpha_lo'], plausible['alpha_hi'])

    def test_simulate(self):
        """A simulated cohort is a valid input."""
        spec = self.directory / 'scenario.conf'
        spec.write_text('n_patients = 8\nhorizon = 1.0\n', encoding='utf-8')

        self.assertEqual(self.run_command('simulate', '--spec', str(spec),
                                          '--seed', '4'), 0)

        simulation = self.read_json('simulation.json')
        self.assertEqual(simulation['seed'], 4)
        self.assertEqual(simulation['n_patients'], 8)
        self.assertEqual(simulation['truth_method'], 'monte_carlo')
        truth = pd.read_csv(self.out / 'truth.csv')
        self.assertEqual(len(truth), 11)
        dataset = str(self.out / 'dataset.csv')
        self.assertEqual(run_cli('validate', dataset, '-o',
                                 str(self.directory / 'check')), 0)

    def test_invalid_scenario(self):
        """An unknown scenario key exits with 2."""
        spec = self.directory / 'scenario.conf'
        spec.write_text('patients = 8\n', encoding='utf-8')

        self.assertEqual(self.run_command('simulate', '--spec', str(spec)),
                         2)


class TestDeterminism(TestCase):
    """Test that results do not depend on reruns or on --jobs."""

    RUN_FILES = ('effective.conf', 'logging.ini', 'visitweight.log')

    def setUp(self):
        """Create the input files."""
        self._tmp = tempfile.TemporaryDirectory()
        self.directory = Path(self._tmp.name)
        self.small = write_input(self.directory, SMALL_COHORT_CSV)
        self.spec = self.directory / 'scenario.conf'
        self.spec.write_text('n_patients = 10\nhorizon = 1.0\n',
                             encoding='utf-8')

    def tearDown(self):
        """Remove the run directories."""
        self._tmp.cleanup()

    def artifacts(self, name, *argv):
        """Run a command into its own directory and return its outputs."""
        out = self.directory / name
        self.assertEqual(run_cli(*argv, '-o', str(out)), 0)
        return {path.name: path.read_bytes() for path in out.iterdir()
                if path.name not in self.RUN_FILES}

    def test_sensitivity_jobs(self):
        """The grid writes the same bytes serially and in parallel."""
        argv = ('sensitivity', self.small, *SMALL_MODELS, *SMALL_GRID)
        serial = self.artifacts('serial', *argv, '--jobs', '1')
        again = self.artifacts('again', *argv, '--jobs', '1')
        parallel = self.artifacts('parallel', *argv, '--jobs', '3')

        self.assertIn('heatmap.csv', serial)
        self.assertEqual(serial, again)
        self.assertEqual(serial, parallel)

    def test_simulate_jobs(self):
        """A fixed seed gives the same cohort for any --jobs."""
        argv = ('simulate', '--spec', str(self.spec), '--seed', '7')
        serial = self.artifacts('serial', *argv, '--jobs', '1')
        parallel = self.artifacts('parallel', *argv, '--jobs', '4')

        self.assertEqual(sorted(serial), ['dataset.csv', 'simulation.json',
                                          'truth.csv'])
        self.assertEqual(serial, parallel)
