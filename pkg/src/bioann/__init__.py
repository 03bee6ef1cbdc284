"""bioann: biomedical entity recognition and normalization toolkit.

Multi-head BIO tagging over nine entity types, hybrid rule/dense-retrieval
normalization with provenance, PubTator interchange, and a PMID-keyed
annotation cache behind a REST API and CLI.
"""

from bioann.model import (
    Annotation,
    AnnotationResult,
    Document,
    EntityType,
    Mention,
    Normalization,
    NormSource,
    TokenSpan,
    validate_result,
)
from bioann.pipeline import Pipeline, PipelineConfig

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "AnnotationResult",
    "Document",
    "EntityType",
    "Mention",
    "Normalization",
    "NormSource",
    "Pipeline",
    "PipelineConfig",
    "TokenSpan",
    "validate_result",
    "__version__",
]
