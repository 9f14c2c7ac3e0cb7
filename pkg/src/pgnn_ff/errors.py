"""Exception hierarchy. The CLI maps these onto exit codes."""


class PGNNError(Exception):
    pass


class ConfigError(PGNNError, ValueError):
    """Invalid configuration value (exit code 1)."""


class DimensionError(PGNNError, ValueError):
    pass


class IndexRangeError(PGNNError, IndexError):
    """A regressor window reaches outside the recorded samples."""


class DatasetTooShortError(PGNNError, ValueError):
    pass


class NumericalError(PGNNError, ArithmeticError):
    """Base for numerical failures (exit code 2)."""


class SingularMatrixError(NumericalError):
    def __init__(self, message, rcond=None):
        super().__init__(message)
        self.rcond = rcond


class DivergenceError(NumericalError):
    pass
