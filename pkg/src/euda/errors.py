"""Error classes shared across the package.

The classes partition failures the way the CLI reports them: configuration
problems exit 1, data/format problems exit 2, training divergence exits 3.
"""


class EudaError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(EudaError):
    """Invalid configuration value or unusable flag combination."""


class FormatError(EudaError):
    """On-disk payload does not conform to the expected file format."""


class DataError(EudaError):
    """Payload parsed but contains invalid values (e.g. non-finite entries)."""


class ConsistencyError(EudaError):
    """Fields of a payload contradict each other (e.g. label >= num_classes)."""


class ContractError(EudaError):
    """A caller violated an API precondition (shape/range mismatch)."""


class DivergenceError(EudaError):
    """Training produced a non-finite loss."""
