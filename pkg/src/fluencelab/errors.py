"""Exception types shared across the package.

Plain ``ValueError`` is used for mathematical domain violations (negative
coefficients, angles outside range); the classes below mark failures that the
CLI maps to distinct exit codes.
"""


class FluenceLabError(Exception):
    """Base class for package-specific failures."""


class ConfigurationError(FluenceLabError):
    """Invalid configuration document or inconsistent run setup (exit 1)."""


class DataFormatError(FluenceLabError):
    """Malformed or truncated data file (exit 2)."""


class NumericError(FluenceLabError):
    """Numerical procedure failed to converge or produced an undefined result (exit 3)."""
