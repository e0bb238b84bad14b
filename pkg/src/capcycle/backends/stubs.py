"""Deterministic GPU-free backends for tests, CI, and desk-scale runs.

Every stub's output is a pure function of (descriptor, input, seed); the
randomness comes from SHA-256 in counter mode rather than a PRNG so the
bytes are identical on every platform and library version. Call counts
are tracked per handle and per backend kind so cache idempotence can be
asserted from the outside.
"""

from __future__ import annotations

import hashlib
import threading
from collections import Counter
from typing import Mapping

import numpy as np
from PIL import Image

from .. import images
from ..errors import BackendFaultError, ConfigurationError
from ..types import BackendDescriptor, BackendKind, ImageRef
from .base import Captioner, Encoder, Generator

CALL_COUNTS: Counter[str] = Counter()
_COUNT_LOCK = threading.Lock()


def reset_call_counts() -> None:
    with _COUNT_LOCK:
        CALL_COUNTS.clear()


def _count(kind: str, name: str) -> None:
    with _COUNT_LOCK:
        CALL_COUNTS[kind] += 1
        CALL_COUNTS[f"{kind}:{name}"] += 1


def _hash_bytes(material: bytes, nbytes: int) -> bytes:
    """SHA-256 counter mode: deterministic byte stream of any length."""
    out = bytearray()
    counter = 0
    while len(out) < nbytes:
        out.extend(hashlib.sha256(material + counter.to_bytes(8, "big")).digest())
        counter += 1
    return bytes(out[:nbytes])


_ADJECTIVES = (
    "red", "blue", "green", "small", "large", "old", "young", "bright",
    "dark", "wooden", "striped", "round", "quiet", "busy", "empty", "wet",
)
_NOUNS = (
    "bicycle", "dog", "house", "tree", "boat", "chair", "mountain", "cup",
    "bird", "road", "market", "bridge", "garden", "train", "lamp", "river",
)


class LookupCaptioner(Captioner):
    """Maps image content hashes to fixed caption texts."""

    def __init__(self, table: Mapping[str, str], token_limit: int = 100):
        self.table = dict(table)
        self.descriptor = BackendDescriptor(
            kind=BackendKind.CAPTIONER,
            name="stub-lookup",
            version="1",
            params={"table": self.table, "token_limit": token_limit},
        )

    def _caption_text(self, image: ImageRef, prompt_template: str) -> str:
        _count("captioner", "stub-lookup")
        try:
            return self.table[image.content_hash]
        except KeyError:
            raise BackendFaultError(
                f"lookup captioner has no entry for image {image.content_hash[:12]}..."
            ) from None


class HashCaptioner(Captioner):
    """Derives a pseudo-sentence from the image hash; distinct images get
    distinct captions with overwhelming probability."""

    def __init__(self, token_limit: int = 100):
        self.descriptor = BackendDescriptor(
            kind=BackendKind.CAPTIONER,
            name="stub-hash",
            version="1",
            params={"token_limit": token_limit},
        )

    def _caption_text(self, image: ImageRef, prompt_template: str) -> str:
        _count("captioner", "stub-hash")
        b = _hash_bytes(image.content_hash.encode("ascii"), 5)
        return (
            f"a {_ADJECTIVES[b[0] % 16]} {_NOUNS[b[1] % 16]} near "
            f"a {_ADJECTIVES[b[2] % 16]} {_NOUNS[b[3] % 16]} {image.content_hash[:8]}"
        )


class ConstantCaptioner(Captioner):
    """Emits the same caption for every image; a degenerate baseline."""

    def __init__(self, text: str, token_limit: int = 100):
        if not text.strip():
            raise ConfigurationError("constant captioner needs non-empty text")
        self.text = text
        self.descriptor = BackendDescriptor(
            kind=BackendKind.CAPTIONER,
            name="stub-constant",
            version="1",
            params={"text": text, "token_limit": token_limit},
        )

    def _caption_text(self, image: ImageRef, prompt_template: str) -> str:
        _count("captioner", "stub-constant")
        return self.text


class NoiseGenerator(Generator):
    """Pixels are a pure function of hash(text, seed); no two (text, seed)
    pairs collide in practice."""

    def __init__(self, width: int = 64, height: int = 64):
        self.width = width
        self.height = height
        self.descriptor = BackendDescriptor(
            kind=BackendKind.GENERATOR,
            name="stub-noise",
            version="1",
            params={"width": width, "height": height},
        )

    def _generate_pixels(self, text: str, seed: int) -> np.ndarray:
        _count("generator", "stub-noise")
        return noise_pixels(text, seed, self.width, self.height)


def noise_pixels(text: str, seed: int, width: int, height: int) -> np.ndarray:
    material = hashlib.sha256(
        text.encode("utf-8") + b"\x00" + seed.to_bytes(8, "big", signed=True)
    ).digest()
    raw = _hash_bytes(material, height * width * 3)
    return np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)


class OracleGenerator(Generator):
    """Returns the stored image for captions it knows, simulating a perfect
    captioner; unknown captions fall back to deterministic noise.

    The descriptor params carry content hashes (not paths) of the mapped
    images so the cache identity follows pixel content.
    """

    def __init__(self, mapping: Mapping[str, np.ndarray], width: int = 64, height: int = 64):
        self.mapping = {text: np.asarray(px, dtype=np.uint8) for text, px in mapping.items()}
        self.width = width
        self.height = height
        self.descriptor = BackendDescriptor(
            kind=BackendKind.GENERATOR,
            name="stub-oracle",
            version="1",
            params={
                "mapping": {t: images.pixel_hash(px) for t, px in self.mapping.items()},
                "width": width,
                "height": height,
            },
        )

    @classmethod
    def from_paths(cls, mapping: Mapping[str, str], width: int = 64, height: int = 64) -> "OracleGenerator":
        return cls(
            {text: images.decode_rgb(path) for text, path in mapping.items()},
            width=width,
            height=height,
        )

    def _generate_pixels(self, text: str, seed: int) -> np.ndarray:
        _count("generator", "stub-oracle")
        known = self.mapping.get(text)
        if known is not None:
            return known
        return noise_pixels(text, seed, self.width, self.height)


class PixelEncoder(Encoder):
    """Downsamples to side x side RGB, flattens, mean-centers.

    side=16 gives the 768-dim vector used throughout the desk-scale tests.
    Constant-color images mean-center to the zero vector and are rejected,
    as any degenerate encoder output must be.
    """

    def __init__(self, side: int = 16):
        self.side = side
        self.descriptor = BackendDescriptor(
            kind=BackendKind.ENCODER,
            name="stub-pixel",
            version="1",
            params={"side": side, "pooling": "mean_center", "dim": side * side * 3},
        )

    def _embed(self, pixels: np.ndarray) -> np.ndarray:
        _count("encoder", "stub-pixel")
        img = Image.fromarray(pixels, mode="RGB").resize(
            (self.side, self.side), resample=Image.BILINEAR
        )
        flat = np.asarray(img, dtype=np.float64).reshape(-1)
        return flat - flat.mean()


class HistogramEncoder(Encoder):
    """Per-channel intensity histograms; insensitive to layout, never zero."""

    def __init__(self, bins: int = 32):
        self.bins = bins
        self.descriptor = BackendDescriptor(
            kind=BackendKind.ENCODER,
            name="stub-histogram",
            version="1",
            params={"bins": bins, "dim": bins * 3},
        )

    def _embed(self, pixels: np.ndarray) -> np.ndarray:
        _count("encoder", "stub-histogram")
        chunks = []
        total = pixels.shape[0] * pixels.shape[1]
        for c in range(3):
            hist, _ = np.histogram(pixels[:, :, c], bins=self.bins, range=(0, 256))
            chunks.append(hist / total)
        return np.concatenate(chunks)
