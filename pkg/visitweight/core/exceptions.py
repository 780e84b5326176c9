"""Visitweight Core-Defined Exceptions."""


class VisitWeightException(Exception):
    """Exception thrown when an analysis step cannot proceed."""

    def __str__(self):
        """Return message of VisitWeightException."""
        return 'visitweight: ' + super().__str__()


class DatasetValidationError(VisitWeightException):
    """Exception thrown when an input dataset breaks its contract."""

    def __init__(self, message, line=None):
        """Assign parameters to instance variables.

        Args:
            message (str): what is wrong with the data.
            line (int): 1-based line of the input file, when known.
        """
        super().__init__(message)
        self.message = message
        self.line = line

    def __str__(self):
        """Return the message, prefixed by the line number if known."""
        if self.line is None:
            return f'visitweight: {self.message}'
        return f'visitweight: line {self.line}: {self.message}'


class WindowPolicyError(VisitWeightException):
    """Exception thrown for invalid visit windows or gap values."""


class ConfigError(VisitWeightException):
    """Exception thrown when a run configuration is invalid."""


class SimulationError(VisitWeightException):
    """Exception thrown when a scenario specification is invalid."""


# Exceptions related to model fitting


class NumericalError(VisitWeightException):
    """Base exception for failed numerical fits."""


class RankDeficientError(NumericalError):
    """Exception raised when a design matrix has dependent columns."""

    def __init__(self, columns):
        """Require the offending columns.

        Args:
            columns (list): names (or indices) of the dependent columns.
        """
        super().__init__()
        self.columns = list(columns)

    def __str__(self):
        """Full message."""
        names = ', '.join(str(column) for column in self.columns)
        return f'visitweight: design matrix is rank deficient in: {names}'


class NoEventsError(NumericalError):
    """Exception raised when a survival stratum has no events."""

    def __init__(self, stratum=None):
        """Assign the stratum name.

        Args:
            stratum (str): name of the stratum without events.
        """
        super().__init__()
        self.stratum = stratum

    def __str__(self):
        """Full message."""
        if self.stratum is None:
            return 'visitweight: no events in stratum'
        return (f'visitweight: no events in stratum {self.stratum}; '
                'consider coarser visit categories')


class ConvergenceError(NumericalError):
    """Exception raised when an iterative fit does not converge."""

    def __init__(self, message, trace=None):
        """Assign message and iteration trace.

        Args:
            message (str): what did not converge.
            trace (list): (iteration, objective) pairs.
        """
        super().__init__(message)
        self.trace = list(trace or [])


class NormalizerError(NumericalError):
    """Exception raised when a normalizing-constant fit is not positive."""


class UnfittedCategoryError(NumericalError):
    """Exception raised when predicting from a category without a model."""

    def __init__(self, category):
        """Require the category.

        Args:
            category (VisitCategory): category without fitted model.
        """
        super().__init__()
        self.category = category

    def __str__(self):
        """Full message."""
        return f'visitweight: no fitted intensity model for {self.category}'


class IntensityFitError(NumericalError):
    """Exception raised when some category intensity fits failed."""

    def __init__(self, failures, model_set=None):
        """Assign per-category failures and the partial model set.

        Args:
            failures (dict): category -> exception.
            model_set (IntensityModelSet): models that did fit.
        """
        super().__init__()
        self.failures = dict(failures)
        self.model_set = model_set

    def __str__(self):
        """Full message."""
        parts = [f'{category}: {exc}'
                 for category, exc in self.failures.items()]
        return 'visitweight: intensity fit failed for ' + '; '.join(parts)


class ElicitationError(NumericalError):
    """Exception raised when an elicitation target cannot be computed."""
