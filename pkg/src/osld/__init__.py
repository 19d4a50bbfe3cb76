"""Open-set learning and discovery over staged text benchmarks.

The package trains a known-class classifier on embeddings, detects
novel-class samples with an energy score, clusters them, names the
clusters via keywords, pseudo-labels and retrains, and evaluates with
Hungarian-matched grouped metrics.
"""

from osld.errors import (
    DatasetError,
    DegenerateCentroidError,
    EmbeddingFormatError,
    LabelLeakError,
    OsldError,
    PipelineError,
    ValidationFailure,
)

__version__ = "0.1.0"

__all__ = [
    "DatasetError",
    "DegenerateCentroidError",
    "EmbeddingFormatError",
    "LabelLeakError",
    "OsldError",
    "PipelineError",
    "ValidationFailure",
    "__version__",
]
