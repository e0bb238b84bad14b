"""Canonical image decoding and pixel hashing.

Every image entering the toolkit is decoded to an 8-bit RGB array first;
hashes are taken over that array (dimensions prefixed so transposed
buffers stay distinct), never over the container file. No resizing
happens here; resizing policy belongs to individual encoders.
"""

from __future__ import annotations

import hashlib
import io
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ContractError, IngestionError
from .types import ImageRef


def pixel_hash(pixels: np.ndarray) -> str:
    """sha256 over (height, width) header plus raw RGB bytes."""
    arr = _check_rgb(pixels)
    h = hashlib.sha256()
    h.update(f"{arr.shape[0]}x{arr.shape[1]}".encode("ascii"))
    h.update(arr.tobytes())
    return h.hexdigest()


def _check_rgb(pixels: np.ndarray) -> np.ndarray:
    arr = np.asarray(pixels)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise ContractError(f"expected uint8 HxWx3 array, got {arr.dtype} {arr.shape}")
    return arr


def decode_rgb(path: str | Path) -> np.ndarray:
    """Decode any Pillow-readable file to the canonical uint8 RGB array."""
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except OSError as exc:
        raise IngestionError(f"cannot decode image {path}: {exc}") from exc


def decode_rgb_bytes(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def encode_png(pixels: np.ndarray) -> bytes:
    arr = _check_rgb(pixels)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def save_png(pixels: np.ndarray, path: str | Path) -> None:
    Path(path).write_bytes(encode_png(pixels))


def ref_from_array(pixels: np.ndarray, uri: str) -> ImageRef:
    arr = _check_rgb(pixels)
    return ImageRef(
        content_hash=pixel_hash(arr),
        uri=uri,
        width=arr.shape[1],
        height=arr.shape[0],
    )


def ref_from_file(path: str | Path) -> ImageRef:
    return ref_from_array(decode_rgb(path), uri=str(path))


def load_rgb(ref: ImageRef) -> np.ndarray:
    """Load the pixels behind a ref and re-verify its content hash."""
    arr = decode_rgb(ref.uri)
    got = pixel_hash(arr)
    if got != ref.content_hash:
        raise ContractError(
            f"image at {ref.uri} hashes to {got[:12]}..., expected {ref.content_hash[:12]}..."
        )
    return arr
