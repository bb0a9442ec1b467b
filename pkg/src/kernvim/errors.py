"""Exception types. Each carries the CLI exit code it maps to."""


class KernvimError(Exception):
    exit_code = 1


class InputError(KernvimError, ValueError):
    """Malformed arguments, files or shapes."""

    exit_code = 2


class DegenerateDataError(KernvimError):
    """Data that cannot support the requested fit (constant covariates, missing arm, ...)."""

    exit_code = 3


class NumericalError(KernvimError, ArithmeticError):
    exit_code = 4
