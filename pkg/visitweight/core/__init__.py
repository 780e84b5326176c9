"""Visitweight.core is the module with the analysis pipeline."""
from visitweight.core.dataset import Dataset, ParseOptions, parse_dataset
from visitweight.core.intensity import (build_risk_table, compute_weights,
                                        fit_intensity_models)
from visitweight.core.sensitivity import GridSpec, run_grid
from visitweight.core.simulator import ScenarioSpec, simulate
from visitweight.core.windows import VisitCategory, WindowPolicy

from .metadata import __version__

__all__ = (
    "Dataset",
    "GridSpec",
    "ParseOptions",
    "ScenarioSpec",
    "VisitCategory",
    "WindowPolicy",
    "build_risk_table",
    "compute_weights",
    "fit_intensity_models",
    "parse_dataset",
    "run_grid",
    "simulate",
    "__version__",
)
