"""Shared exception taxonomy.

Exit-code mapping lives in the CLI: ConfigError -> 4, MissingArtifactError -> 3,
NumericError -> 5, plain I/O errors -> 2.
"""


class ShapeError(ValueError):
    """Operand shapes incompatible with the requested operation."""


class NumericError(ArithmeticError):
    """Non-finite value produced where finiteness is required."""


class ConfigError(ValueError):
    """Invalid configuration value or malformed config document."""


class SimulationError(RuntimeError):
    """A physical invariant was violated after constraint resolution."""


class MissingArtifactError(FileNotFoundError):
    """A pipeline stage requires an upstream artifact that does not exist."""
