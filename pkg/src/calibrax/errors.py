"""Exception hierarchy with stable codes surfaced by the command line."""


class CalibraxError(Exception):
    code = "E_RUNTIME"


class InputFileError(CalibraxError, OSError):
    code = "E_IO"


class DataError(CalibraxError, ValueError):
    """Malformed or out-of-range input data."""

    code = "E_DATA"


class ConfigError(CalibraxError, ValueError):
    code = "E_CONFIG"


class DegenerateFitError(CalibraxError, ValueError):
    """A fit whose inputs carry no usable information (zero variance, one class, ...)."""

    code = "E_DEGENERATE"


class OptimizationError(CalibraxError, ArithmeticError):
    code = "E_OPTIM"


class StatisticalTestError(CalibraxError, ValueError):
    code = "E_STAT"
