"""Orchestration of the cycle: image -> (caption) -> generated image ->
embeddings -> similarity score, with every expensive stage memoized in the
content-addressed cache.

Cache identities per stage:

    caption     descriptor + original image hash + prompt template
    generation  descriptor + caption text hash + seed
    embedding   descriptor + (original or generated) image hash

so the original image is embedded once per encoder no matter how many
captions are scored against it, and changing any backend parameter
invalidates exactly that stage.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import images
from .backends.base import Captioner, Encoder, Generator, is_deterministic
from .cache import CacheStore, Stage, make_key
from .errors import CapcycleError, StageError
from .manifest import EvaluationManifest, ManifestRow
from .similarity import aggregate_scores, cosine_similarity
from .types import Caption, EmbeddingVector, ImageRef, ScoreRecord

logger = logging.getLogger(__name__)

DEFAULT_SEED = 0


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _iso(ts: float) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).isoformat()


def cached_caption(
    store: CacheStore,
    captioner: Captioner,
    image: ImageRef,
    prompt_template: str | None = None,
) -> Caption:
    template = (
        prompt_template
        if prompt_template is not None
        else captioner.descriptor.params.get("prompt_template", "")
    )
    key = make_key(
        Stage.CAPTION,
        captioner.descriptor,
        input_id=f"image:{image.content_hash}|template:{_sha(template or '')}",
    )
    hit = store.get(key)
    if hit is not None:
        payload, _ = hit
        obj = json.loads(payload)
        return Caption(text=obj["text"], token_limit=obj["token_limit"], source=obj["source"])
    caption = captioner.caption(image, prompt_template)
    store.put(
        key,
        json.dumps(
            {"text": caption.text, "token_limit": caption.token_limit,
             "source": caption.source.value},
            sort_keys=True,
        ).encode("utf-8"),
        ext="json",
        meta={
            "descriptor": captioner.descriptor.canonical(),
            "input_id": f"image:{image.content_hash}|template:{_sha(template or '')}",
            "source_image_hash": image.content_hash,
            "seed": 0,
        },
        deterministic=is_deterministic(captioner.descriptor),
    )
    return caption


def cached_generation(
    store: CacheStore,
    generator: Generator,
    caption: Caption,
    seed: int,
) -> tuple[ImageRef, np.ndarray | None, float]:
    """Returns (ref, pixels-if-freshly-generated, created_at epoch)."""
    key = make_key(
        Stage.GENERATION,
        generator.descriptor,
        input_id=f"text:{_sha(caption.text)}",
        seed=seed,
    )
    hit = store.get(key)
    if hit is not None:
        _, meta = hit
        path = store.payload_path(key)
        ref = ImageRef(
            content_hash=meta["content_hash"],
            uri=str(path),
            width=meta["width"],
            height=meta["height"],
        )
        return ref, None, float(meta["created_at"])
    pixels = generator.generate(caption, seed)
    png = images.encode_png(pixels)
    meta = {
        "descriptor": generator.descriptor.canonical(),
        "input_id": f"text:{_sha(caption.text)}",
        "caption_sha256": _sha(caption.text),
        "caption_text": caption.text,
        "content_hash": images.pixel_hash(pixels),
        "width": int(pixels.shape[1]),
        "height": int(pixels.shape[0]),
        "seed": seed,
    }
    path, stored_meta = store.put(
        key, png, ext="png", meta=meta,
        deterministic=is_deterministic(generator.descriptor),
    )
    ref = ImageRef(
        content_hash=str(stored_meta["content_hash"]),
        uri=str(path),
        width=int(stored_meta["width"]),
        height=int(stored_meta["height"]),
    )
    # a nondeterministic backend may have lost the write race; only hand
    # back in-memory pixels when they are the stored bytes
    fresh = pixels if stored_meta["content_hash"] == meta["content_hash"] else None
    return ref, fresh, float(stored_meta["created_at"])


def cached_embedding(
    store: CacheStore,
    encoder: Encoder,
    image: ImageRef,
    pixels: np.ndarray | None = None,
    parent_caption: Caption | None = None,
) -> EmbeddingVector:
    key = make_key(
        Stage.EMBEDDING,
        encoder.descriptor,
        input_id=f"image:{image.content_hash}",
    )
    hit = store.get(key)
    if hit is not None:
        payload, _ = hit
        obj = json.loads(payload)
        return EmbeddingVector(
            values=np.asarray(obj["values"], dtype=np.float64),
            dim=obj["dim"],
            encoder_id=encoder.descriptor,
        )
    vector = (
        encoder.embed_pixels(pixels) if pixels is not None else encoder.embed(image)
    )
    meta = {
        "descriptor": encoder.descriptor.canonical(),
        "input_id": f"image:{image.content_hash}",
        "source_image_hash": image.content_hash,
        "seed": 0,
    }
    if parent_caption is not None:
        meta["parent_caption_sha256"] = _sha(parent_caption.text)
    store.put(
        key,
        json.dumps(
            {"values": vector.values.tolist(), "dim": vector.dim}, sort_keys=True
        ).encode("utf-8"),
        ext="json",
        meta=meta,
        deterministic=is_deterministic(encoder.descriptor),
    )
    return vector


def score_caption(
    image: ImageRef,
    caption: Caption,
    generator: Generator,
    encoder: Encoder,
    store: CacheStore,
    seed: int = DEFAULT_SEED,
    sample_id: str = "",
) -> ScoreRecord:
    """One full cycle: regenerate an image from the caption, embed both
    images, return the cosine similarity with full provenance."""
    try:
        original_vec = cached_embedding(store, encoder, image)
    except CapcycleError as exc:
        raise StageError("embedding", exc) from exc
    try:
        generated_ref, fresh_pixels, created_at = cached_generation(
            store, generator, caption, seed
        )
    except CapcycleError as exc:
        raise StageError("generation", exc) from exc
    try:
        generated_vec = cached_embedding(
            store, encoder, generated_ref, pixels=fresh_pixels, parent_caption=caption
        )
    except CapcycleError as exc:
        raise StageError("embedding", exc) from exc
    score = cosine_similarity(original_vec, generated_vec)
    return ScoreRecord(
        sample_id=sample_id,
        caption=caption,
        original=image,
        generated=generated_ref,
        score=score,
        generator_id=generator.descriptor,
        encoder_id=encoder.descriptor,
        seed=seed,
        created_at=_iso(created_at),
    )


def evaluate_captioner(
    image: ImageRef,
    captioner: Captioner,
    generator: Generator,
    encoder: Encoder,
    store: CacheStore,
    seed: int = DEFAULT_SEED,
    sample_id: str = "",
    prompt_template: str | None = None,
) -> ScoreRecord:
    """Caption the image with the model under evaluation, then score that
    caption through the cycle."""
    try:
        caption = cached_caption(store, captioner, image, prompt_template)
    except CapcycleError as exc:
        raise StageError("caption", exc) from exc
    return score_caption(
        image, caption, generator, encoder, store, seed=seed, sample_id=sample_id
    )


@dataclass
class RunConfig:
    generator: Generator
    encoder: Encoder
    store: CacheStore
    captioner: Captioner | None = None
    seed: int = DEFAULT_SEED
    fail_fast: bool = False
    workers: int = 1
    prompt_template: str | None = None


@dataclass
class RunFailure:
    sample_id: str
    stage: str
    message: str

    def to_dict(self) -> dict:
        return {"sample_id": self.sample_id, "stage": self.stage, "message": self.message}


@dataclass
class RunResult:
    records: list[ScoreRecord] = field(default_factory=list)
    failures: list[RunFailure] = field(default_factory=list)

    def summary(self) -> dict:
        scores = [r.score for r in self.records]
        return {
            "n": len(scores),
            "mean": aggregate_scores(scores) if scores else None,
            "min": min(scores) if scores else None,
            "max": max(scores) if scores else None,
            "failures": len(self.failures),
        }

    def by_sample(self) -> dict[str, float]:
        """Per-image aggregate: mean over that image's per-caption scores."""
        grouped: dict[str, list[float]] = {}
        for r in self.records:
            grouped.setdefault(r.sample_id, []).append(r.score)
        return {sid: aggregate_scores(vals) for sid, vals in grouped.items()}


def _row_tasks(row: ManifestRow, config: RunConfig):
    image = images.ref_from_file(row.image)
    if config.captioner is not None:
        yield (row.sample_id, image, None)
    else:
        for caption in row.captions:
            yield (row.sample_id, image, caption)


def run_manifest(manifest: EvaluationManifest, config: RunConfig) -> RunResult:
    """Score every (image, candidate caption) in the manifest.

    With a captioner configured, the model's own caption is scored once
    per row instead of the manifest's candidates. Failures follow the
    configured policy: fail-fast re-raises, otherwise the row is skipped
    and logged, and the run completes.
    """
    tasks = []
    result = RunResult()
    for row in manifest.rows:
        try:
            tasks.extend(_row_tasks(row, config))
        except CapcycleError as exc:
            if config.fail_fast:
                raise
            logger.warning("skipping %s: %s", row.sample_id, exc)
            result.failures.append(RunFailure(row.sample_id, "ingest", str(exc)))

    def one(task) -> ScoreRecord:
        sample_id, image, caption = task
        if caption is None:
            return evaluate_captioner(
                image, config.captioner, config.generator, config.encoder,
                config.store, seed=config.seed, sample_id=sample_id,
                prompt_template=config.prompt_template,
            )
        return score_caption(
            image, caption, config.generator, config.encoder,
            config.store, seed=config.seed, sample_id=sample_id,
        )

    def run_one(task):
        sample_id = task[0]
        try:
            return one(task), None
        except CapcycleError as exc:
            if config.fail_fast:
                raise
            stage = exc.stage if isinstance(exc, StageError) else "pipeline"
            logger.warning("skipping %s: %s", sample_id, exc)
            return None, RunFailure(sample_id, stage, str(exc))

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(run_one, tasks))
    else:
        outcomes = [run_one(t) for t in tasks]

    for record, failure in outcomes:
        if record is not None:
            result.records.append(record)
        else:
            result.failures.append(failure)
    result.records.sort(key=lambda r: (r.sample_id, r.caption.text, r.caption.source.value))
    return result
