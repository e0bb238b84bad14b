"""Contracts shared by all captioner / generator / encoder backends.

A handle is an immutable pairing of a descriptor (the identity that goes
into cache keys and reports) with a runtime implementation. Same
descriptor + input + seed must mean byte-identical output; backends that
cannot promise this declare ``deterministic: false`` in their params.
"""

from __future__ import annotations

import re
from abc import ABC, abstractmethod

import numpy as np

from .. import images
from ..errors import BackendFaultError, ContractError
from ..types import BackendDescriptor, Caption, CaptionSource, EmbeddingVector, ImageRef

DEFAULT_PROMPT_TEMPLATE = "<Image> A short image caption:"
IMAGE_PLACEHOLDER = "<Image>"
DEFAULT_TOKEN_LIMIT = 100

_SPECIAL_TOKEN = re.compile(r"</?[a-zA-Z_][a-zA-Z0-9_]*/?>")
_TOKEN = re.compile(r"\S+")


def strip_special_tokens(text: str) -> str:
    """Drop <eos>/<pad>-style markers; caption text carries words only."""
    return _SPECIAL_TOKEN.sub(" ", text)


def count_tokens(text: str) -> int:
    return len(_TOKEN.findall(text))


def truncate_to_token_limit(text: str, limit: int) -> str:
    """Cut at the limit-th token; the cut lands on a word boundary so a
    trailing partial word can never survive."""
    if limit < 1:
        raise ContractError("token limit must be positive")
    tokens = _TOKEN.findall(text)
    if len(tokens) <= limit:
        return text.strip()
    return " ".join(tokens[:limit])


def validate_prompt_template(template: str) -> str:
    if template.count(IMAGE_PLACEHOLDER) != 1:
        raise ContractError(
            f"prompt template must contain exactly one {IMAGE_PLACEHOLDER} placeholder"
        )
    return template


class Captioner(ABC):
    """Produces a text description of an image."""

    descriptor: BackendDescriptor

    def caption(self, image: ImageRef, prompt_template: str | None = None) -> Caption:
        template = validate_prompt_template(
            prompt_template
            if prompt_template is not None
            else self.descriptor.params.get("prompt_template", DEFAULT_PROMPT_TEMPLATE)
        )
        raw = self._caption_text(image, template)
        cleaned = strip_special_tokens(raw).strip()
        if not cleaned:
            raise BackendFaultError(
                f"captioner {self.descriptor.name!r} produced empty output"
            )
        limit = int(self.descriptor.params.get("token_limit", DEFAULT_TOKEN_LIMIT))
        return Caption(
            text=truncate_to_token_limit(cleaned, limit),
            token_limit=limit,
            source=CaptionSource.MODEL_GENERATED,
        )

    @abstractmethod
    def _caption_text(self, image: ImageRef, prompt_template: str) -> str:
        """Return the raw model output for this image."""


class Generator(ABC):
    """Produces image pixels from a caption; persistence is the pipeline's job."""

    descriptor: BackendDescriptor

    def generate(self, caption: Caption, seed: int) -> np.ndarray:
        if not caption.text.strip():
            raise ContractError("cannot generate from an empty caption")
        pixels = self._generate_pixels(caption.text, seed)
        arr = np.asarray(pixels)
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
            raise BackendFaultError(
                f"generator {self.descriptor.name!r} returned a non-RGB buffer"
            )
        return arr

    @abstractmethod
    def _generate_pixels(self, text: str, seed: int) -> np.ndarray:
        """Return uint8 HxWx3 pixels for this text and seed."""


class Encoder(ABC):
    """Extracts a fixed-dimension feature vector from an image."""

    descriptor: BackendDescriptor

    def embed(self, image: ImageRef) -> EmbeddingVector:
        return self.embed_pixels(images.load_rgb(image))

    def embed_pixels(self, pixels: np.ndarray) -> EmbeddingVector:
        values = np.asarray(self._embed(pixels), dtype=np.float64)
        try:
            return EmbeddingVector(
                values=values, dim=values.shape[0], encoder_id=self.descriptor
            )
        except ContractError as exc:
            # NaN / zero output is the encoder misbehaving, not the caller
            raise BackendFaultError(
                f"encoder {self.descriptor.name!r} produced invalid output: {exc}"
            ) from exc

    @abstractmethod
    def _embed(self, pixels: np.ndarray) -> np.ndarray:
        """Return the raw 1-D feature vector for these pixels."""


def is_deterministic(descriptor: BackendDescriptor) -> bool:
    return bool(descriptor.params.get("deterministic", True))
