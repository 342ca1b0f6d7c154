"""Exception hierarchy shared by all embedlens modules.

Three branches map onto the CLI exit-code contract:
``IoFailure`` -> exit 1, ``ValidationError`` (and subclasses) -> exit 2,
``NumericalFailure`` -> exit 3.
"""


class EmbedLensError(Exception):
    """Base class for all toolkit errors."""


class IoFailure(EmbedLensError):
    """A file could not be read or written."""


class NumericalFailure(EmbedLensError):
    """A numerical routine diverged or produced an inconsistent result."""


class ValidationError(EmbedLensError):
    """Invalid input data or a violated domain contract."""


class ZeroVector(ValidationError):
    """A vector with (near-)zero norm where a direction is required."""


class DimensionMismatch(ValidationError):
    """Operands have incompatible dimensions."""


class EmptySet(ValidationError):
    """An operation received an empty collection."""


class ManifestParse(ValidationError):
    """An embedding-set manifest is malformed or self-inconsistent."""


class BlobSizeMismatch(ValidationError):
    """Blob byte length disagrees with the manifest row counts."""


class NonFiniteValue(ValidationError):
    """An embedding row contains NaN or Inf."""


class ClassTooSmall(ValidationError):
    """A class has too few embeddings for the requested split."""


class UnknownClassId(ValidationError):
    """A referenced class id does not exist in the target label table."""


class TooFewSamples(ValidationError):
    """Not enough samples to estimate the requested statistic."""


class ClassUniverseMismatch(ValidationError):
    """Reference and query sets do not share the same class ids."""


class KTooLarge(ValidationError):
    """k exceeds the number of available reference embeddings."""


class MismatchedResults(ValidationError):
    """Two experiment results are not comparable."""


class LexiconTooSmall(ValidationError):
    """The modifier lexicon cannot produce enough distinct prompts."""


class DegenerateRotation(ValidationError):
    """No rotation plane exists (dimension too small or parallel axes)."""
