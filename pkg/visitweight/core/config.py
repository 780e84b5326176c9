"""Here you can control the config parameters of a visitweight run.

Basically you can use a config file (-c option) and use arguments on command
line. If you specify a config file, then any option configured inside this
file will be overridden by the option on command line.
"""

import sys
import warnings
from argparse import ArgumentParser, RawDescriptionHelpFormatter
from configparser import ConfigParser
from configparser import Error as ConfigParserError
from dataclasses import dataclass, fields
from datetime import date
from pathlib import Path
from typing import Optional, Tuple

from jinja2 import Template

from visitweight.core.constants import (ALPHA_START, ALPHA_STEP, ALPHA_STOP,
                                        AUC_INCREMENT, AUC_TIMERANGE,
                                        ELICITATION_INTERVALS,
                                        ELICITATION_TARGETS,
                                        GAP_RELATIVE_TOLERANCE, IN_WINDOW_DF,
                                        NORMALIZER_DF, OUT_OF_WINDOW_DF,
                                        PLOT_INCREMENT, Q_MEAN, Q_SD, TIME_DF)
from visitweight.core.dataset import ParseOptions
from visitweight.core.exceptions import ConfigError, WindowPolicyError
from visitweight.core.helpers import get_date
from visitweight.core.metadata import __version__
from visitweight.core.sensitivity import GridSpec
from visitweight.core.tilt import TiltConfig
from visitweight.core.windows import CATEGORIES, VisitCategory, WindowPolicy

__all__ = ('COMMANDS', 'RunConfig', 'VisitWeightConfig', 'write_run_files')

COMMANDS = ('validate', 'diagnose', 'classify', 'fit-aar', 'sensitivity',
            'elicit', 'simulate')
DATA_COMMANDS = COMMANDS[:-1]
LOG_FILE = 'visitweight.log'
TEMPLATE_FILES = {'templates/run.conf.template': 'effective.conf',
                  'templates/logging.ini.template': 'logging.ini'}

DEFAULTS = {'input': None,
            'out': 'visitweight-run',
            'debug': False,
            'jobs': 1,
            'seed': None,
            'very_early_offset': 1.0,
            'early_offset': 0.5,
            'late_factor': 1.5,
            'very_late_factor': 2.0,
            'out_of_window_df': OUT_OF_WINDOW_DF,
            'in_window_df': IN_WINDOW_DF,
            'time_df': TIME_DF,
            'normalizer_df': NORMALIZER_DF,
            'alpha_e_start': ALPHA_START,
            'alpha_e_stop': ALPHA_STOP,
            'alpha_e_step': ALPHA_STEP,
            'alpha_l_start': ALPHA_START,
            'alpha_l_stop': ALPHA_STOP,
            'alpha_l_step': ALPHA_STEP,
            'timerange': AUC_TIMERANGE,
            'increment': AUC_INCREMENT,
            'plot_increment': PLOT_INCREMENT,
            'q_mean': Q_MEAN,
            'q_sd': Q_SD,
            'normalizer_rows': 'all',
            'elicitation_intervals': ELICITATION_INTERVALS,
            'elicitation_alphas': (0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0),
            'elicitation_targets': ELICITATION_TARGETS,
            'no_normalizer': False,
            'weight_cap': None,
            'trajectory_cells': ((0.0, 0.0), (4.0, 0.0), (7.0, 0.0)),
            'strict_gaps': False,
            'strict_integer_das': False,
            'study_end': None,
            'gap_tolerance': GAP_RELATIVE_TOLERANCE,
            'das_range': (0.0, 12.0),
            'unweighted': False,
            'spec': None,
            'dataset': None,
            'truth': None}

# Keys left out of the effective config echo; they never change results.
NOT_ECHOED = ('debug', 'jobs')


def _is_none(value):
    return value is None or str(value).strip().lower() in ('', 'none')


def _to_bool(value):
    return value in ('True', 'true', 'yes', '1', True)


def _to_optional_int(value):
    return None if _is_none(value) else int(value)


def _to_optional_float(value):
    return None if _is_none(value) else float(value)


def _to_optional_str(value):
    return None if _is_none(value) else str(value)


def _to_floats(value):
    if isinstance(value, str):
        return tuple(float(item) for item in value.split(',') if item.strip())
    return tuple(float(item) for item in value)


def _to_range(value):
    return None if _is_none(value) else _to_floats(value)


def _to_cells(value):
    if not isinstance(value, str):
        return tuple((float(ae), float(al)) for ae, al in value)
    cells = []
    for item in value.split(','):
        if item.strip():
            alpha_e, alpha_l = item.split(':')
            cells.append((float(alpha_e), float(alpha_l)))
    return tuple(cells)


def _to_date(value):
    return None if _is_none(value) else get_date(value)


CONVERTERS = {'input': _to_optional_str, 'out': str, 'debug': _to_bool,
              'jobs': int, 'seed': _to_optional_int,
              'very_early_offset': float, 'early_offset': float,
              'late_factor': float, 'very_late_factor': float,
              'out_of_window_df': int, 'in_window_df': int, 'time_df': int,
              'normalizer_df': int,
              'alpha_e_start': float, 'alpha_e_stop': float,
              'alpha_e_step': float, 'alpha_l_start': float,
              'alpha_l_stop': float, 'alpha_l_step': float,
              'timerange': float, 'increment': float,
              'plot_increment': float, 'q_mean': float, 'q_sd': float,
              'normalizer_rows': str,
              'elicitation_intervals': _to_floats,
              'elicitation_alphas': _to_floats,
              'elicitation_targets': _to_floats,
              'no_normalizer': _to_bool,
              'weight_cap': _to_optional_float,
              'trajectory_cells': _to_cells,
              'strict_gaps': _to_bool, 'strict_integer_das': _to_bool,
              'study_end': _to_date, 'gap_tolerance': float,
              'das_range': _to_range, 'unweighted': _to_bool,
              'spec': _to_optional_str, 'dataset': _to_optional_str,
              'truth': _to_optional_str}


def _format_value(value):
    """Return the config-file text of a typed option value."""
    if value is None:
        return 'none'
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, date):
        return value.isoformat()
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ','.join(f'{ae!r}:{al!r}' for ae, al in value)
        return ','.join(repr(float(item)) for item in value)
    return str(value)


@dataclass(frozen=True)
class RunConfig:  # pylint: disable=too-many-instance-attributes
    """Typed and validated options of one run.

    Field names match the keys of the configuration file.
    """

    command: str
    input: Optional[str] = None
    out: str = 'visitweight-run'
    debug: bool = False
    jobs: int = 1
    seed: Optional[int] = None
    very_early_offset: float = 1.0
    early_offset: float = 0.5
    late_factor: float = 1.5
    very_late_factor: float = 2.0
    out_of_window_df: int = OUT_OF_WINDOW_DF
    in_window_df: int = IN_WINDOW_DF
    time_df: int = TIME_DF
    normalizer_df: int = NORMALIZER_DF
    alpha_e_start: float = ALPHA_START
    alpha_e_stop: float = ALPHA_STOP
    alpha_e_step: float = ALPHA_STEP
    alpha_l_start: float = ALPHA_START
    alpha_l_stop: float = ALPHA_STOP
    alpha_l_step: float = ALPHA_STEP
    timerange: float = AUC_TIMERANGE
    increment: float = AUC_INCREMENT
    plot_increment: float = PLOT_INCREMENT
    q_mean: float = Q_MEAN
    q_sd: float = Q_SD
    normalizer_rows: str = 'all'
    elicitation_intervals: Tuple[float, ...] = ELICITATION_INTERVALS
    elicitation_alphas: Tuple[float, ...] = DEFAULTS['elicitation_alphas']
    elicitation_targets: Tuple[float, ...] = ELICITATION_TARGETS
    no_normalizer: bool = False
    weight_cap: Optional[float] = None
    trajectory_cells: Tuple[Tuple[float, float], ...] = \
        DEFAULTS['trajectory_cells']
    strict_gaps: bool = False
    strict_integer_das: bool = False
    study_end: Optional[date] = None
    gap_tolerance: float = GAP_RELATIVE_TOLERANCE
    das_range: Optional[Tuple[float, ...]] = (0.0, 12.0)
    unweighted: bool = False
    spec: Optional[str] = None
    dataset: Optional[str] = None
    truth: Optional[str] = None

    def __post_init__(self):
        """Validate every option before any computation."""
        if self.command not in COMMANDS:
            raise ConfigError(f'unknown command {self.command!r}')
        if self.jobs < 1:
            raise ConfigError(f'jobs must be at least 1, got {self.jobs}')
        try:
            self.window_policy()
        except WindowPolicyError as exc:
            raise ConfigError(str(exc).replace('visitweight: ', '')) from exc
        for name in ('out_of_window_df', 'in_window_df', 'time_df',
                     'normalizer_df'):
            if getattr(self, name) < 0:
                raise ConfigError(f'{name} must be non-negative')
        self._check_grid()
        self._check_positive('timerange', 'increment', 'plot_increment',
                             'gap_tolerance')
        if self.increment > self.timerange or \
                self.plot_increment > self.timerange:
            raise ConfigError('increments must not exceed the timerange')
        self.tilt_config()
        self._check_elicitation()
        if self.weight_cap is not None and not self.weight_cap > 0:
            raise ConfigError('weight_cap must be positive')
        if self.das_range is not None and (
                len(self.das_range) != 2 or
                not self.das_range[0] < self.das_range[1]):
            raise ConfigError('das_range must be two increasing values or '
                              'none')

    def _check_positive(self, *names):
        for name in names:
            if not getattr(self, name) > 0:
                raise ConfigError(f'{name} must be positive, got '
                                  f'{getattr(self, name)}')

    def _check_grid(self):
        self._check_positive('alpha_e_step', 'alpha_l_step')
        for axis in ('alpha_e', 'alpha_l'):
            start = getattr(self, f'{axis}_start')
            stop = getattr(self, f'{axis}_stop')
            if start < 0 or stop < start:
                raise ConfigError(f'{axis} axis needs 0 <= start <= stop, '
                                  f'got [{start}, {stop}]')

    def _check_elicitation(self):
        if not self.elicitation_intervals or \
                min(self.elicitation_intervals) <= 0:
            raise ConfigError('elicitation_intervals must be positive')
        if any(alpha < 0 for alpha in self.elicitation_alphas):
            raise ConfigError('elicitation_alphas must be non-negative')
        targets = self.elicitation_targets
        if len(targets) != 2 or not 0 < targets[0] < targets[1] < 1:
            raise ConfigError('elicitation_targets must be two increasing '
                              'probabilities')

    def window_policy(self):
        """Return the visit window thresholds."""
        return WindowPolicy(very_early_offset=self.very_early_offset,
                            early_offset=self.early_offset,
                            late_factor=self.late_factor,
                            very_late_factor=self.very_late_factor)

    def basis_dfs(self):
        """Return the spline df of R of each category."""
        return {category: (self.in_window_df
                           if category is VisitCategory.IN_WINDOW
                           else self.out_of_window_df)
                for category in CATEGORIES}

    def grid_spec(self):
        """Return the axes of the sensitivity grid."""
        return GridSpec(self.alpha_e_start, self.alpha_e_stop,
                        self.alpha_e_step, self.alpha_l_start,
                        self.alpha_l_stop, self.alpha_l_step)

    def tilt_config(self):
        """Return the tilting function with both alphas at 0."""
        return TiltConfig(q_mean=self.q_mean, q_sd=self.q_sd,
                          normalizer_rows=self.normalizer_rows)

    def parse_options(self):
        """Return the dataset parsing options."""
        return ParseOptions(strict_integer_das=self.strict_integer_das,
                            gap_tolerance=self.gap_tolerance,
                            strict_gaps=self.strict_gaps,
                            study_end=self.study_end,
                            das_range=self.das_range)

    def to_items(self):
        """Return (key, text) pairs readable back through ``-c``."""
        return [(item.name, _format_value(getattr(self, item.name)))
                for item in fields(self)
                if item.name != 'command' and item.name not in NOT_ECHOED]


class VisitWeightConfig():
    """Handle settings of a visitweight run."""

    def __init__(self, argv=None):
        """Parse the command line.

        Args:
            argv (list): arguments without the program name; None reads
                ``sys.argv``.
        """
        self.options = {}
        conf_parser = ArgumentParser(add_help=False)

        conf_parser.add_argument("-c", "--conf",
                                 help="Specify a config file",
                                 metavar="FILE")

        parser = ArgumentParser(prog='visitweight',
                                parents=[conf_parser],
                                formatter_class=RawDescriptionHelpFormatter,
                                description=__doc__)

        parser.add_argument('-v', '--version',
                            action='version',
                            version="visitweight %s" % __version__)

        common = _common_parser()
        subparsers = parser.add_subparsers(dest='command', required=True)
        self.subparsers = {}
        for command in COMMANDS:
            subparser = subparsers.add_parser(command, parents=[common])
            if command in DATA_COMMANDS:
                subparser.add_argument('input', nargs='?',
                                       help="Input dataset CSV")
            self.subparsers[command] = subparser

        self.subparsers['fit-aar'].add_argument(
            '--unweighted', action='store_true',
            help="Fit the outcome model with unit weights")
        simulate = self.subparsers['simulate']
        simulate.add_argument('--spec', action='store', metavar='FILE',
                              help="Scenario file (flat key = value)")
        simulate.add_argument('--dataset', action='store', metavar='FILE',
                              help="Where to write the simulated dataset")
        simulate.add_argument('--truth', action='store', metavar='FILE',
                              help="Where to write the true trajectory")

        self.conf_parser, self.parser = conf_parser, parser
        self.parse_args(argv)

    def parse_args(self, argv=None):
        """Get the command line options and update the run settings.

        Built-in defaults are updated by the ``[run]`` section of the
        config file, and both are overridden by command-line flags.
        """
        argv = sys.argv[1:] if argv is None else list(argv)
        defaults = dict(DEFAULTS)

        options, argv = self.conf_parser.parse_known_args(argv)
        if options.conf:
            defaults.update(_read_config_file(options.conf))

        for subparser in self.subparsers.values():
            subparser.set_defaults(**defaults)

        self.options['run'] = self._parse_options(argv)

    def _parse_options(self, argv):
        """Create a typed Namespace using the given argv.

        Args:
            argv(list): command-line arguments left by the conf parser.

        Returns:
            options(Namespace): Namespace with the args given

        """
        options, unknown = self.parser.parse_known_args(argv)
        if unknown:
            warnings.warn(f"Unknown arguments: {unknown}")
        for key, converter in CONVERTERS.items():
            value = getattr(options, key)
            try:
                setattr(options, key, converter(value))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f'invalid value for {key}: '
                                  f'{value!r}') from exc
        return options

    def run_config(self):
        """Return the validated RunConfig of the parsed options."""
        options = self.options['run']
        return RunConfig(**{item.name: getattr(options, item.name)
                            for item in fields(RunConfig)})


def _common_parser():
    """Return the parser of the options shared by all subcommands."""
    common = ArgumentParser(add_help=False)
    common.add_argument('-D', '--debug', action='store_true',
                        help="Run in debug mode")
    common.add_argument('-j', '--jobs', action='store',
                        help="Number of parallel workers")
    common.add_argument('-o', '--out', action='store', metavar='DIR',
                        help="Output directory of the run")
    common.add_argument('--seed', action='store',
                        help="Random seed of the simulator")
    for name in DEFAULTS:
        if name in ('input', 'out', 'debug', 'jobs', 'seed', 'unweighted',
                    'spec', 'dataset', 'truth'):
            continue
        flag = '--' + name.replace('_', '-')
        if isinstance(DEFAULTS[name], bool):
            common.add_argument(flag, action='store_true', dest=name)
        else:
            common.add_argument(flag, action='store', dest=name)
    return common


def _read_config_file(path):
    """Return the ``[run]`` items of a config file.

    A flat ``key = value`` file is accepted as the ``[run]`` section.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f'config file {path} does not exist')
    text = path.read_text(encoding='utf-8')
    if not any(line.lstrip().startswith('[') for line in text.splitlines()):
        text = '[run]\n' + text
    config = ConfigParser(interpolation=None)
    try:
        config.read_string(text, source=str(path))
    except ConfigParserError as exc:
        raise ConfigError(f'cannot read config file {path}: {exc}') from exc
    if not config.has_section('run'):
        raise ConfigError(f'config file {path} has no [run] section')
    items = dict(config.items('run'))
    unknown = sorted(set(items) - set(DEFAULTS))
    if unknown:
        warnings.warn(f"Unknown configuration keys: {unknown}")
    return {key: value for key, value in items.items() if key in DEFAULTS}


def write_run_files(run_config, destination):
    """Write ``effective.conf`` and ``logging.ini`` into a run directory.

    Returns:
        list: paths of the written files.

    """
    destination = Path(destination)
    destination.mkdir(parents=True, exist_ok=True)
    return _render_config_templates(TEMPLATE_FILES, destination,
                                    items=run_config.to_items(),
                                    command=run_config.command,
                                    version=__version__,
                                    log_file=repr(str(destination /
                                                      LOG_FILE)))


def _render_config_templates(templates, destination, **kwargs):
    """Create config files based on template files.

    Args:
        templates (dict): template path (relative to the package) -> name
            of the rendered file.
        destination (Path): directory in which the files will be placed.
        **kwargs: template variables.
    """
    tmpl_path = Path(__file__).resolve().parent.parent
    written = []
    for tmpl, name in templates.items():
        with open(tmpl_path / tmpl, 'r', encoding='utf-8') as src_file:
            content = Template(src_file.read(),
                               keep_trailing_newline=True).render(**kwargs)
        dst_path = Path(destination) / name
        with open(dst_path, 'w', encoding='utf-8') as dst_file:
            dst_file.write(content)
        written.append(dst_path)
    return written
