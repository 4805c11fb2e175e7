"""Exception taxonomy shared across the package."""


class EihiError(Exception):
    """Base class for all package-specific errors."""


class ContractError(EihiError):
    """An operation was called outside its documented contract."""


class ShapeMismatchError(ContractError):
    """Tensor or batch dimensions do not line up."""


class NonFiniteError(EihiError):
    """A computation produced NaN or Inf."""


class ConfigError(EihiError):
    """Invalid configuration value."""


class ShiftConfigError(ConfigError):
    """Invalid source/target domain shift configuration."""


class IngestionError(EihiError):
    """Image-folder ingestion failed."""


class PpmParseError(IngestionError):
    """Malformed PPM/PGM file."""


class NoPositiveError(EihiError):
    """A class has too few samples to draw a positive from."""


class NoNegativeError(EihiError):
    """No foreign-class samples exist to draw negatives from."""


class ZeroNormError(EihiError):
    """A zero-norm vector reached a normalization step."""


class DegeneratePairError(ZeroNormError):
    """A guidance pair has a zero-norm reference embedding."""


class DeterminismError(EihiError):
    """A function expected to be deterministic returned differing values."""
