"""Exception hierarchy shared across the package."""


class OsldError(Exception):
    """Base class for all package errors."""


class DatasetError(OsldError):
    """Malformed benchmark file or manifest."""


class LabelLeakError(OsldError):
    """A method code path touched the gold label of a test document."""


class EmbeddingFormatError(OsldError):
    """Embedding or checkpoint file does not match its binary format."""


class DegenerateCentroidError(OsldError):
    """A cluster centroid embedded to the zero vector."""


class ValidationFailure(OsldError):
    """Manifest validation produced FAIL entries (CLI exit code 1)."""


class PipelineError(OsldError):
    """Runtime failure inside a pipeline run (CLI exit code 2)."""
