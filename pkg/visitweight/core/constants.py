"""Module with the main constants from visitweight.

These constants may be overridden by values passed on the command line or in
a run configuration file.
"""
WEEKS_PER_MONTH = 4.345
DAYS_PER_MONTH = 30.417
MONTHS_PER_YEAR = 12

DAS_MIN = 0
DAS_MAX = 12
GAP_RELATIVE_TOLERANCE = 1e-6

# Outcome trajectory and AUC defaults (years)
AUC_TIMERANGE = 7.0
AUC_INCREMENT = 0.007
PLOT_INCREMENT = 0.1

# Sensitivity grid, both axes
ALPHA_START = 0.0
ALPHA_STOP = 7.0
ALPHA_STEP = 0.5

# Tilting function q(D) = Phi((D - mean) / sd)
Q_MEAN = 3.0
Q_SD = 1.0

# Probability of a visit within the next two weeks, in months
ELICITATION_WINDOW = 2 / WEEKS_PER_MONTH
ELICITATION_INTERVALS = (2.0, 6.0, 12.0)
ELICITATION_TARGETS = (0.6, 0.99)
ELICITATION_BRACKET = (0.0, 50.0)

# Degrees of freedom of the spline bases
OUT_OF_WINDOW_DF = 3
IN_WINDOW_DF = 2
TIME_DF = 3
NORMALIZER_DF = 3

WEIGHT_RATIO_WARNING = 100.0
