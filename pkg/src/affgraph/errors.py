"""Exception types shared across the package.

Each carries the CLI exit code it maps to.
"""


class AffGraphError(Exception):
    exit_code = 1


class ShapeError(AffGraphError, ValueError):
    exit_code = 4


class NumericError(AffGraphError, ArithmeticError):
    exit_code = 4


class DegenerateTargetError(AffGraphError, ValueError):
    exit_code = 4


class ConfigError(AffGraphError, ValueError):
    exit_code = 2


class IngestionError(AffGraphError, IOError):
    exit_code = 3


class StateError(AffGraphError, RuntimeError):
    exit_code = 4


class UndefinedMetricError(AffGraphError, ValueError):
    exit_code = 3
