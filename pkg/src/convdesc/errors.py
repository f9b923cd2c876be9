"""Exception types shared across the toolkit."""


class ConvdescError(Exception):
    """Base class for all toolkit errors."""


class TensorFormatError(ConvdescError):
    """A binary tensor/descriptor/model file is malformed."""


class ManifestError(ConvdescError):
    """A dataset manifest failed validation. Carries every violation found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class RegionBoundsError(ConvdescError):
    """A pooling region does not fit inside the feature-map grid."""


class DegenerateVectorError(ConvdescError):
    """A zero vector was handed to a normalization that cannot accept one."""


class NegativeInputError(ConvdescError):
    """An operation requiring non-negative input saw a negative component."""


class InsufficientDataError(ConvdescError):
    """Too few samples to fit a model."""
