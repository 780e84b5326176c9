"""Module with utilities to create tests."""
from math import log

import numpy as np

from visitweight.core.dataset import ParseOptions, parse_dataset
from visitweight.core.intensity import CategoryModel, IntensityModelSet
from visitweight.core.numerics import LinearFit, SplineBasisSpec
from visitweight.core.tilt import Normalizer, NormalizerModels
from visitweight.core.windows import CATEGORIES

# Head of a single-patient extract; S is in months and R was recorded at
# each visit. The fifth visit has no recommended interval.
FAKEDAT_CSV = """id,date,time_since_dx,DAS,S,censor,R
1,2009-05-13,0.0383,10,0.690,0,0.460
1,2009-06-03,0.0958,10,0.460,0,0.460
1,2009-06-17,0.134,7,1.38,0,2
1,2009-07-29,0.249,,2.30,0,2
1,2009-10-07,0.441,5,4.14,0,
1,2010-02-10,0.786,3,4.60,0,2
"""

# Three patients with consistent gaps, one censored at study end.
SMALL_COHORT_CSV = """id,date,time_since_dx,DAS,S,censor,R
1,,0.0,6,1.2,0,1
1,,0.1,7,2.4,0,2
1,,0.3,4,1.2,0,2
1,,0.4,5,6.0,0,3
1,,0.9,3,,0,3
2,,0.0,8,0.6,0,2
2,,0.05,9,3.0,0,2
2,,0.3,6,2.4,0,2
2,,0.5,4,4.8,1,3
3,,0.0,5,3.0,0,3
3,,0.25,5,9.0,0,3
3,,1.0,2,3.0,0,6
3,,1.25,2,,0,6
"""


def get_fakedat_dataset(**options):
    """Return the six-visit extract, parsed with the given options."""
    return parse_dataset(FAKEDAT_CSV, ParseOptions(**options))


def get_small_cohort():
    """Return the three-patient cohort."""
    return parse_dataset(SMALL_COHORT_CSV)


def get_constant_model_set(rates, bounds=(0.0, 24.0)):
    """Return an IntensityModelSet with a constant rate per category.

    Args:
        rates (float, dict): rate per month of every category, or a dict
            VisitCategory -> rate; categories left out are unfitted.
        bounds (tuple): range of R the models accept without clamping.
    """
    if not isinstance(rates, dict):
        rates = {category: rates for category in CATEGORIES}
    models = {}
    for category, rate in rates.items():
        fit = LinearFit(coefficients=np.array([log(rate)]),
                        column_names=('intercept',))
        models[category] = CategoryModel(
            category=category, fit=fit,
            basis=SplineBasisSpec(df=0, boundary_knots=bounds))
    return IntensityModelSet(models=models, failures={})


def get_frozen_normalizers(early=1.0, late=None, alpha_e=1.0, alpha_l=1.0,
                           bounds=(0.0, 24.0)):
    """Return NormalizerModels with constant values."""
    def frozen(alpha, value):
        return Normalizer(alpha=alpha,
                          fit=LinearFit(coefficients=np.array([value])),
                          basis=SplineBasisSpec(df=0, boundary_knots=bounds))

    late = early if late is None else late
    return NormalizerModels(early=frozen(alpha_e, early),
                            late=frozen(alpha_l, late))
