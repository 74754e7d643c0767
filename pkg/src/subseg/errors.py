"""Exception types shared across the package.

The CLI maps these onto exit codes: config/usage problems exit 1, data and
format problems exit 2, numeric divergence exits 3.
"""


class SubsegError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(SubsegError):
    """Shapes or lengths of numeric operands do not match."""


class DegenerateInputError(SubsegError):
    """Numerically degenerate input, e.g. an exactly-zero-norm vector."""


class ConfigError(SubsegError):
    """Invalid configuration value (bad counts, odd encoding dim, ...)."""


class ContractError(SubsegError):
    """A caller violated an interface contract (missing cache, bad rows, ...)."""


class FormatError(SubsegError):
    """A file does not conform to its on-disk format."""


class IngestionError(SubsegError):
    """Dataset-level problem: empty input, inconsistent dims, bad manifest."""


class DivergenceError(SubsegError):
    """Training produced a non-finite loss."""


class DecodingError(SubsegError):
    """No feasible label sequence exists for a video."""


class InventoryError(SubsegError):
    """Expected run outputs are missing for one or more videos."""
