"""Cosine similarity between image embeddings, and score aggregation.

This is the similarity-calculator stage of the cycle: the score for a
caption is the cosine of the angle between the original image's feature
vector and the regenerated image's feature vector.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, DegenerateInputError
from .types import EmbeddingVector

# accumulate in the widest float the platform offers (80-bit on x86 linux);
# 768-dim embeddings already accumulate visible rounding error in float32
_ACC = np.longdouble


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """(a.b) / (|a||b|), clamped to [-1, 1] to absorb float overshoot.

    Exactly symmetric in its arguments: elementwise products commute and
    the accumulation order is fixed, so swapping a and b cannot change a
    single bit of the result.
    """
    if a.dim != b.dim:
        raise ContractError(f"dimension mismatch: {a.dim} != {b.dim}")
    return _cosine(a.values, b.values)


def cosine_similarity_arrays(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> float:
    """Same computation on bare arrays, for callers without descriptors."""
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape or va.ndim != 1:
        raise ContractError(f"shape mismatch: {va.shape} vs {vb.shape}")
    return _cosine(va, vb)


def _cosine(va: np.ndarray, vb: np.ndarray) -> float:
    wa = va.astype(_ACC)
    wb = vb.astype(_ACC)
    na2 = (wa * wa).sum()
    nb2 = (wb * wb).sum()
    if na2 == 0 or nb2 == 0:
        # an all-zero embedding signals an encoder fault; never report 0.0
        raise DegenerateInputError("cosine similarity is undefined for a zero vector")
    sim = float((wa * wb).sum() / (np.sqrt(na2) * np.sqrt(nb2)))
    return max(-1.0, min(1.0, sim))


def aggregate_scores(scores: Iterable[float], mode: str = "mean") -> float:
    """Aggregate per-caption scores; benchmark numbers are averages."""
    vals = list(scores)
    if not vals:
        raise ContractError("cannot aggregate an empty score list")
    if mode != "mean":
        raise ContractError(f"unknown aggregation mode {mode!r}")
    for v in vals:
        if not math.isfinite(v) or not -1.0 <= v <= 1.0:
            raise ContractError(f"score out of range [-1, 1]: {v}")
    return float(math.fsum(vals) / len(vals))
