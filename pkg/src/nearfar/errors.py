"""Exception hierarchy. Each class maps onto one CLI exit code."""


class NearFarError(Exception):
    exit_code = 1


class ConfigError(NearFarError, ValueError):
    exit_code = 2


class SchemaError(NearFarError, ValueError):
    """Malformed input file or record; message carries file/line when known."""

    exit_code = 3


class NumericalError(NearFarError, ArithmeticError):
    exit_code = 4


class DataIOError(NearFarError, OSError):
    exit_code = 5
