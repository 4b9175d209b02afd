"""Exception types shared across the package.

The CLI maps these onto exit codes, so every failure a user can trigger
should surface as one of them.
"""


class SirWaveError(Exception):
    """Base class for all package errors."""


class ParameterError(SirWaveError, ValueError):
    """A model or numerics parameter violates its constraints."""


class NoEndemicEquilibrium(SirWaveError, ValueError):
    """Raised when R0 <= 1, so no positive steady state exists."""


class SubcriticalSpeedError(SirWaveError, ValueError):
    """The requested wave speed is not above the critical speed."""


class DispersionRangeError(SirWaveError, OverflowError):
    """Exponent in the characteristic function exceeds the safe range."""


class BracketError(SirWaveError, RuntimeError):
    """A root bracket could not be established."""


class EnvelopeEscapeError(SirWaveError, RuntimeError):
    """The integral operator pushed an iterate outside the envelope."""


class NumericAbort(SirWaveError, RuntimeError):
    """Simulation produced NaN or significantly negative densities."""


class NoFrontError(SirWaveError, ValueError):
    """The infection level never crosses the tracking threshold."""


class InsufficientSamplesError(SirWaveError, ValueError):
    """Too few front samples to fit a speed."""


class ConfigError(SirWaveError, ValueError):
    """Configuration file is malformed or fails validation."""
