"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for every error raised by this package."""


class IoFailureError(EngineError):
    """Underlying file could not be read or written."""


class BadMagicError(EngineError):
    """File does not start with the expected magic bytes, or the version is unknown."""


class TruncatedFileError(EngineError):
    """Byte count of the file is inconsistent with its header."""


class DimMismatchError(EngineError):
    """Vector or matrix dimensionality differs from what the space declares."""


class ZeroVectorError(EngineError):
    """A row of a normalized space has an effectively zero L2 norm."""


class CountMismatchError(EngineError):
    """Row counts of jointly loaded artifacts disagree."""


class DuplicateIdError(EngineError):
    """Two corpus records share the same id."""


class MalformedMetadataError(EngineError):
    """A metadata line or class-set file cannot be parsed or misses required fields."""


class EmptyMatrixError(EngineError):
    """An index cannot be built over zero rows."""


class UnnormalizedSpaceError(EngineError):
    """Cosine search requires a space with unit-norm enforcement."""


class UnnormalizedQueryError(EngineError):
    """Query vector is not unit length within tolerance."""


class CorruptIndexError(EngineError):
    """Persisted index sidecar is internally inconsistent."""


class MissingSpaceError(EngineError):
    """A required embedding space is not attached to the corpus, query set, or class set."""


class EmptyCandidatesError(EngineError):
    """Fine retrieval received an empty candidate set."""


class EmptyCaptionsError(EngineError):
    """Text-modal probability requires at least one caption embedding."""


class ClassCountMismatchError(EngineError):
    """Image-modal and text-modal predictions cover different class counts."""


class MissingLabelsError(EngineError):
    """Evaluation requires a labeled query set."""


class KExceedsNError(EngineError):
    """Requested caption count exceeds the candidate pool size."""


class ConfigError(EngineError):
    """Engine configuration file is invalid."""
