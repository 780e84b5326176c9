"""Holds main metadata information about the project.

The present metadata is intended to be used mainly on the setup.
"""
__version__ = '2021.1'
__author__ = 'Visitweight Team'
__author_email__ = 'devel@visitweight.example.org'
__license__ = 'MIT'
__url__ = 'https://github.com/visitweight/visitweight'
__description__ = ('Visit-window intensity weighting and exponential tilting '
                   'sensitivity analysis for irregular longitudinal data')
