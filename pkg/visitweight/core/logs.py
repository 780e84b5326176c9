"""Handle logs written by visitweight runs."""
from configparser import RawConfigParser
# noqa so it does not conflict with grouped imports
# pylint: disable=ungrouped-imports
from logging import config, getLogger
# pylint: enable=ungrouped-imports
from pathlib import Path

__all__ = ('LogManager',)
LOG = getLogger(__name__)


class LogManager:
    """Manage handlers for all loggers."""

    _PARSER = RawConfigParser()
    _FILE_HANDLER = 'file'

    @classmethod
    def load_config_file(cls, config_file, debug=False):
        """Load log configuration file.

        Check whether file exists and if there's an OSError, try removing
        the file handler.

        Args:
            config_file (:class:`str`, :class:`pathlib.Path`):
                Configuration file path.
            debug (bool): lower the root and visitweight loggers to DEBUG.
        """
        if Path(config_file).exists():
            cls._PARSER.read(config_file)
            cls._set_debug_mode(debug)
            cls._use_config_file(config_file)
        else:
            LOG.warning('Log config file "%s" does not exist. Using default '
                        'Python logging configuration.',
                        config_file)

    @classmethod
    def _set_debug_mode(cls, debug=False):
        if debug is True:
            cls._PARSER.set('logger_root', 'level', 'DEBUG')
            cls._PARSER.set('logger_visitweight', 'level', 'DEBUG')
            LOG.info('Setting log configuration with debug mode.')

    @classmethod
    def _use_config_file(cls, config_file):
        """Use parsed logging configuration."""
        try:
            config.fileConfig(cls._PARSER, disable_existing_loggers=False)
            LOG.info('Logging config file "%s" loaded successfully.',
                     config_file)
        except OSError:
            cls._catch_config_file_exception(config_file)

    @classmethod
    def _catch_config_file_exception(cls, config_file):
        """Try not using the file handler (for unwritable run dirs)."""
        section = f'handler_{cls._FILE_HANDLER}'
        if section in cls._PARSER:
            LOG.warning('Failed to load "%s". Trying to disable file '
                        'handler.', config_file)
            cls._PARSER.remove_section(section)
            cls._drop_handler_references(cls._FILE_HANDLER)
            cls._use_config_file(config_file)
        else:
            LOG.warning('Failed to load "%s". Using default Python '
                        'logging configuration.', config_file)

    @classmethod
    def _drop_handler_references(cls, name):
        """Remove *name* from the handler lists of the parsed config."""
        for section in cls._PARSER.sections():
            key = 'keys' if section == 'handlers' else 'handlers'
            if section != 'handlers' and not section.startswith('logger_'):
                continue
            if not cls._PARSER.has_option(section, key):
                continue
            names = [item.strip() for item in
                     cls._PARSER.get(section, key).split(',')
                     if item.strip() and item.strip() != name]
            cls._PARSER.set(section, key, ','.join(names))
