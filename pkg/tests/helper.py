"""Module with some helpers for tests."""
from pathlib import Path
from unittest.mock import patch

from visitweight.core.cli import main
from visitweight.core.config import VisitWeightConfig

__all__ = ('get_config', 'run_cli', 'write_input')


def get_config(*argv):
    """Return the RunConfig of a command line (without program name)."""
    return VisitWeightConfig(list(argv)).run_config()


def write_input(directory, text, name='input.csv'):
    """Write a dataset file in *directory* and return its path as str."""
    path = Path(directory) / name
    path.write_text(text, encoding='utf-8')
    return str(path)


def run_cli(*argv):
    """Run the command line, leaving the global logging setup untouched.

    Returns:
        int: exit code of :func:`visitweight.core.cli.main`.

    """
    with patch('visitweight.core.cli.LogManager.load_config_file'):
        return main(list(argv))
