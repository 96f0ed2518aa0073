"""Exception types shared across the package."""


class SteerCompError(Exception):
    """Base class for all package errors."""


class ConfigError(SteerCompError, ValueError):
    """Invalid configuration values or missing referenced files."""


class OffPath(SteerCompError):
    """Vehicle drifted too far from the reference path."""

    def __init__(self, distance, limit):
        super().__init__(f"vehicle is {distance:.2f} m from the path (limit {limit:.1f} m)")
        self.distance = distance
        self.limit = limit


class SpeedTooLow(SteerCompError, ValueError):
    pass


class DegenerateData(SteerCompError, ValueError):
    pass


class NumericalFailure(SteerCompError, ArithmeticError):
    pass


class InsufficientData(SteerCompError, ValueError):
    pass


class MissingChannel(SteerCompError, KeyError):
    pass


class Diverged(SteerCompError, ArithmeticError):
    pass


class ArchMismatch(SteerCompError, ValueError):
    pass


class NonFiniteInput(SteerCompError, ValueError):
    pass


class LengthMismatch(SteerCompError, ValueError):
    pass


class SeriesTooShort(SteerCompError, ValueError):
    pass


class ZeroVariance(SteerCompError, ZeroDivisionError):
    pass
