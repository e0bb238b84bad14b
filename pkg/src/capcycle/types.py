"""Immutable value objects shared by every module.

No inference and no I/O happens here; everything is plain data plus
validation. All types are frozen dataclasses and safe to share across
worker threads.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .errors import ConfigurationError, ContractError

HASH_HEX_LEN = 64  # sha256


class CaptionSource(str, enum.Enum):
    MODEL_GENERATED = "model_generated"
    HUMAN_REFERENCE = "human_reference"
    FOIL = "foil"
    HALLUCINATED = "hallucinated"


class JudgmentScale(str, enum.Enum):
    LIKERT_1_4 = "likert_1_4"
    FRACTION_YES = "fraction_yes"
    BINARY_ACCURATE = "binary_accurate"


class BackendKind(str, enum.Enum):
    CAPTIONER = "captioner"
    GENERATOR = "generator"
    ENCODER = "encoder"


@dataclass(frozen=True)
class ImageRef:
    """Pointer to a decoded image: locator plus a digest of its RGB pixels.

    content_hash is computed over the canonically decoded 8-bit RGB buffer
    (dimensions included), never over container bytes, so re-encodings of
    identical pixels collide intentionally.
    """

    content_hash: str
    uri: str
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ContractError(f"image dimensions must be >= 1, got {self.width}x{self.height}")
        if len(self.content_hash) != HASH_HEX_LEN or any(
            c not in "0123456789abcdef" for c in self.content_hash
        ):
            raise ContractError("content_hash must be a lowercase sha256 hex digest")


@dataclass(frozen=True)
class Caption:
    """One candidate caption with its provenance tag."""

    text: str
    token_limit: int = 100
    source: CaptionSource = CaptionSource.HUMAN_REFERENCE

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ContractError("caption text must be non-empty after trimming")
        if self.token_limit < 1:
            raise ContractError("token_limit must be positive")
        if not isinstance(self.source, CaptionSource):
            object.__setattr__(self, "source", CaptionSource(self.source))


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    """Finite, non-degenerate feature vector emitted by an image encoder."""

    values: np.ndarray
    dim: int
    encoder_id: "BackendDescriptor"

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1:
            raise ContractError(f"embedding must be 1-D, got shape {arr.shape}")
        if arr.shape[0] != self.dim:
            raise ContractError(f"length {arr.shape[0]} != declared dim {self.dim}")
        if not np.all(np.isfinite(arr)):
            raise ContractError("embedding contains NaN or Inf")
        if not np.any(arr):
            raise ContractError("embedding is the all-zero vector")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def allclose(self, other: "EmbeddingVector", atol: float = 0.0) -> bool:
        return self.dim == other.dim and bool(
            np.allclose(self.values, other.values, rtol=0.0, atol=atol)
        )


@dataclass(frozen=True)
class BackendDescriptor:
    """Canonical identity of a captioner / generator / encoder.

    (kind, name, version, params) pin every knob that can change model
    output; the canonical string below is the cache-key ingredient and
    the reproducibility fingerprint embedded in reports.
    """

    kind: BackendKind
    name: str
    version: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not isinstance(self.kind, BackendKind):
            object.__setattr__(self, "kind", BackendKind(self.kind))
        if not self.name or not self.version:
            raise ContractError("descriptor name and version must be non-empty")
        object.__setattr__(self, "params", dict(self.params))
        # fail fast on unserializable params rather than at cache-key time
        canonical_descriptor_string(self)

    def canonical(self) -> str:
        return canonical_descriptor_string(self)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BackendDescriptor):
            return NotImplemented
        return self.canonical() == other.canonical()

    def __hash__(self) -> int:
        return hash(self.canonical())

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "name": self.name,
            "version": self.version,
            "params": dict(self.params),
        }

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "BackendDescriptor":
        try:
            return cls(
                kind=BackendKind(obj["kind"]),
                name=obj["name"],
                version=obj["version"],
                params=obj.get("params", {}),
            )
        except (KeyError, ValueError) as exc:
            raise ConfigurationError(f"bad descriptor object: {exc}") from exc


def canonical_descriptor_string(d: BackendDescriptor) -> str:
    """Deterministic serialization of a descriptor.

    Keys are sorted and values rendered by the JSON encoder, which is
    locale-independent; equal descriptors always produce identical strings.
    """
    try:
        return json.dumps(
            {
                "kind": d.kind.value,
                "name": d.name,
                "version": d.version,
                "params": d.params,
            },
            sort_keys=True,
            separators=(",", ":"),
            ensure_ascii=True,
            allow_nan=False,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"descriptor param not serializable: {exc}") from exc


@dataclass(frozen=True)
class ScoreRecord:
    """Full trace of one cycle evaluation: caption in, similarity score out."""

    sample_id: str
    caption: Caption
    original: ImageRef
    generated: ImageRef
    score: float
    generator_id: BackendDescriptor
    encoder_id: BackendDescriptor
    seed: int
    created_at: str

    def __post_init__(self) -> None:
        if not math.isfinite(self.score) or not -1.0 <= self.score <= 1.0:
            raise ContractError(f"score must lie in [-1, 1], got {self.score}")
        if not -(2**63) <= self.seed < 2**63:
            raise ContractError("seed must fit in 64 bits")


@dataclass(frozen=True)
class HumanJudgment:
    """One human quality judgment for an (image, caption) sample."""

    sample_id: str
    value: float
    scale: JudgmentScale

    def __post_init__(self) -> None:
        if not isinstance(self.scale, JudgmentScale):
            object.__setattr__(self, "scale", JudgmentScale(self.scale))
        v = self.value
        if self.scale is JudgmentScale.LIKERT_1_4 and v not in (1, 2, 3, 4):
            raise ContractError(f"likert_1_4 value must be one of 1..4, got {v}")
        if self.scale is JudgmentScale.FRACTION_YES and not 0.0 <= v <= 1.0:
            raise ContractError(f"fraction_yes value must lie in [0, 1], got {v}")
        if self.scale is JudgmentScale.BINARY_ACCURATE and v not in (0, 1):
            raise ContractError(f"binary_accurate value must be 0 or 1, got {v}")
