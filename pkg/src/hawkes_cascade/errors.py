"""Exception types; the CLI maps each one to an exit status."""


class HawkesCascadeError(Exception):
    exit_code = 1


class ConfigError(HawkesCascadeError, ValueError):
    exit_code = 2


class NumericalError(HawkesCascadeError, ArithmeticError):
    exit_code = 3


class InsufficientDataError(HawkesCascadeError, ValueError):
    exit_code = 4
