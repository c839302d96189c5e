"""Exception taxonomy shared across the package.

CLI exit codes map onto these: ConfigError -> 1 (usage), DataError -> 2,
NumericsError -> 3. Everything else is a plain bug.
"""


class TscnetError(Exception):
    """Base class for all package errors."""


class ContractError(TscnetError):
    """An operation was called with arguments violating its contract."""


class ShapeError(ContractError):
    """Tensor dimensions are incompatible with the requested operation."""


class UnsupportedShapeError(ShapeError):
    """A shape the implementation explicitly does not support (e.g. H != W)."""


class ConfigError(TscnetError):
    """Invalid configuration value or combination."""


class DataError(TscnetError):
    """Missing or malformed input data (files, manifests, checkpoints)."""


class NumericsError(TscnetError):
    """Non-finite values or a failed numeric verification."""
