from __future__ import annotations

import hashlib

import numpy as np
import pytest

from capcycle import images
from capcycle.backends import stubs
from capcycle.cache import CacheStore
from capcycle.manifest import EvaluationManifest, ManifestRow, write_manifest
from capcycle.types import Caption, CaptionSource


def synthetic_pixels(tag: str, width: int = 48, height: int = 48) -> np.ndarray:
    """Deterministic pseudo-photo: unique per tag, same on every platform."""
    material = hashlib.sha256(f"fixture:{tag}".encode()).digest()
    raw = stubs._hash_bytes(material, height * width * 3)
    return np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)


@pytest.fixture
def store(tmp_path):
    return CacheStore(tmp_path / "cache")


@pytest.fixture
def image_dir(tmp_path):
    d = tmp_path / "imgs"
    d.mkdir()
    return d


def make_image(directory, tag: str, width: int = 48, height: int = 48):
    """Write a synthetic PNG and return its ImageRef."""
    path = directory / f"{tag}.png"
    pixels = synthetic_pixels(tag, width, height)
    images.save_png(pixels, path)
    return images.ref_from_file(path)


def make_manifest(directory, n_images: int, refs_per_image: int = 1,
                  dataset_id: str = "synthetic") -> EvaluationManifest:
    rows = []
    for i in range(n_images):
        ref = make_image(directory, f"img{i:03d}")
        captions = tuple(
            Caption(
                text=f"scene {i:03d} reference {j} {ref.content_hash[:8]}",
                source=CaptionSource.HUMAN_REFERENCE,
            )
            for j in range(refs_per_image)
        )
        rows.append(
            ManifestRow(
                sample_id=f"s{i:03d}",
                image=ref.uri,
                captions=captions,
                provenance="fixture",
            )
        )
    return EvaluationManifest(dataset_id=dataset_id, rows=rows)


def oracle_for_manifest(manifest: EvaluationManifest) -> stubs.OracleGenerator:
    """Generator that reproduces each image exactly for its own references."""
    mapping = {}
    for row in manifest.rows:
        pixels = images.decode_rgb(row.image)
        for caption in row.captions:
            mapping[caption.text] = pixels
    return stubs.OracleGenerator(mapping)


@pytest.fixture
def manifest_file(tmp_path, image_dir):
    def _write(n_images: int, refs_per_image: int = 1, name: str = "manifest.jsonl"):
        manifest = make_manifest(image_dir, n_images, refs_per_image)
        path = tmp_path / name
        write_manifest(manifest, path)
        return path, manifest

    return _write


@pytest.fixture(autouse=True)
def _reset_stub_counters():
    stubs.reset_call_counts()
    yield
    stubs.reset_call_counts()
