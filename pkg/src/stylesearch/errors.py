"""Exception types shared across the package."""


class StyleSearchError(Exception):
    """Base class for all package errors."""


class InputShapeError(StyleSearchError, ValueError):
    """Input tensor/grid has an unexpected shape or is not divisible as required."""


class EmptyQueryError(StyleSearchError, ValueError):
    """Text query is empty after tokenization."""


class InsufficientDataError(StyleSearchError, ValueError):
    """Not enough samples for the requested operation (e.g. fewer points than k)."""


class DegenerateInputError(StyleSearchError, ValueError):
    """Zero-norm vector where a direction is required."""


class ManifestError(StyleSearchError, ValueError):
    """Malformed or inconsistent dataset manifest."""


class UnsupportedTransformError(StyleSearchError, ValueError):
    """Requested style transform does not exist for this tag."""


class ConfigurationError(StyleSearchError, ValueError):
    """Inconsistent model/prompt/training configuration."""


class EvaluationError(StyleSearchError, ValueError):
    """Evaluation input is incomplete (e.g. ground truth missing from index)."""


class BatchError(StyleSearchError, ValueError):
    """Mismatched batch lengths."""


class SamplingError(StyleSearchError, ValueError):
    """Triplet sampling is impossible (e.g. singleton style set)."""


class TrainingAbort(StyleSearchError, RuntimeError):
    """Training stopped on a non-finite loss; last good checkpoint is retained."""


class CheckpointError(StyleSearchError, ValueError):
    """Checkpoint file is missing, corrupt, or has an unknown format version."""
