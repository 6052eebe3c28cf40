"""Exception hierarchy shared by every module.

The CLI maps the three broad families onto process exit codes:
configuration problems exit with 2, data problems with 3 and numerical
divergence with 4.
"""


class TurboKoopError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(TurboKoopError):
    exit_code = 2


class DataError(TurboKoopError, ValueError):
    """Something is wrong with the numbers or their layout."""

    exit_code = 3


class InvalidInputError(DataError):
    """Non-finite entries or an out-of-domain argument."""


class ShapeError(DataError):
    pass


class SchemaError(DataError):
    """A named channel is missing, duplicated or unknown."""


class DegenerateChannelError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class IngestError(DataError):
    pass


class ModelFormatError(DataError):
    """Malformed model container or unsupported format version."""


class NumericalDivergenceError(TurboKoopError, ArithmeticError):
    exit_code = 4


class DivergenceError(NumericalDivergenceError):
    """A rollout produced a non-finite value.

    ``step`` is the index of the first offending output sample.
    """

    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


class TrainingDivergedError(NumericalDivergenceError):
    pass


class SingularityError(NumericalDivergenceError):
    """Turbine speed fell below the floor where the 1/N_t term blows up."""

    def __init__(self, message, time_s=None):
        super().__init__(message)
        self.time_s = time_s
