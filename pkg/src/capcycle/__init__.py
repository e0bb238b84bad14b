"""capcycle: reference-free image-caption evaluation.

A caption is scored by regenerating an image from it with a text-to-image
backend and measuring embedding cosine similarity against the original
image. The package bundles the scoring pipeline, a content-addressed
inference cache, pluggable model backends with GPU-free stubs, dataset
adapters, and the benchmark protocols that correlate scores with human
judgments.
"""

from .correlation import (
    CorrelationReport,
    brute_force_tau_oracle,
    kendall_tau_b,
    kendall_tau_c,
)
from .similarity import aggregate_scores, cosine_similarity
from .types import (
    BackendDescriptor,
    BackendKind,
    Caption,
    CaptionSource,
    EmbeddingVector,
    HumanJudgment,
    ImageRef,
    JudgmentScale,
    ScoreRecord,
    canonical_descriptor_string,
)

__version__ = "0.1.0"

__all__ = [
    "BackendDescriptor",
    "BackendKind",
    "Caption",
    "CaptionSource",
    "CorrelationReport",
    "EmbeddingVector",
    "HumanJudgment",
    "ImageRef",
    "JudgmentScale",
    "ScoreRecord",
    "aggregate_scores",
    "brute_force_tau_oracle",
    "canonical_descriptor_string",
    "cosine_similarity",
    "kendall_tau_b",
    "kendall_tau_c",
    "__version__",
]
