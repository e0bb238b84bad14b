"""Adapters from published dataset releases to validated manifests.

Each loader reads a dataset's release format as distributed and
normalizes it into an EvaluationManifest; source files are never
mutated. Expected layouts:

flickr8k root/
    ExpertAnnotations.txt        image<TAB>caption_id<TAB>e1<TAB>e2<TAB>e3
    CrowdFlowerAnnotations.txt   image<TAB>caption_id<TAB>yes%<TAB>#yes<TAB>#no
    Flickr8k.token.txt           caption_id<TAB>caption text
    Flicker8k_Dataset/           image files (falls back to root/)

foil: a JSON object with "annotations": [{"id", "image_id", "caption",
"foil": bool, ...}] and optionally "images": [{"id", "file_name"}];
true/foil captions pair up by shared "id".

mhaldetect: a JSON list of {"image": str, "sentences": [{"text",
"label": "Accurate"|"Inaccurate"}], optional "ground_truth": str}.

proposed dataset merge: an MSCOCO-style captions JSON plus a Flickr30k
token file; every merged image carries exactly five reference captions.
"""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from pathlib import Path

from .errors import ContractError, IngestionError
from .manifest import EvaluationManifest, ManifestRow
from .types import Caption, CaptionSource, HumanJudgment, JudgmentScale

logger = logging.getLogger(__name__)

FLICKR8K_EXPERT_PAIRS = 5664
FLICKR8K_CF_PAIRS = 48000
FLICKR30K_MERGE_PAIRS = 30000
REFERENCES_PER_IMAGE = 5


def _read_token_file(path: Path) -> dict[str, str]:
    captions: dict[str, str] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t", 1)
            if len(parts) != 2:
                raise IngestionError(f"{path}:{lineno}: expected 'caption_id<TAB>text'")
            captions[parts[0].strip()] = parts[1].strip()
    return captions


def _resolve_image(root: Path, name: str) -> str:
    candidate = root / "Flicker8k_Dataset" / name
    if candidate.exists():
        return str(candidate)
    return str(root / name)


def load_flickr8k_expert(
    path: str | Path, expected_pairs: int | None = FLICKR8K_EXPERT_PAIRS
) -> EvaluationManifest:
    """Expert judgments: each image-caption pair rated 1..4 by three experts."""
    root = Path(path)
    ann_path = root / "ExpertAnnotations.txt"
    token_path = root / "Flickr8k.token.txt"
    for p in (ann_path, token_path):
        if not p.exists():
            raise IngestionError(f"missing source file: {p}")
    captions = _read_token_file(token_path)
    rows: list[ManifestRow] = []
    with ann_path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise IngestionError(
                    f"{ann_path}:{lineno}: expected 5 tab-separated fields, got {len(parts)}"
                )
            image_name, caption_id, *scores = parts
            if caption_id not in captions:
                raise IngestionError(f"{ann_path}:{lineno}: unknown caption id {caption_id!r}")
            sample_id = f"{image_name}#{caption_id}"
            try:
                judgments = tuple(
                    HumanJudgment(
                        sample_id=sample_id,
                        value=float(s),
                        scale=JudgmentScale.LIKERT_1_4,
                    )
                    for s in scores
                )
            except (ValueError, ContractError) as exc:
                raise IngestionError(f"{ann_path}:{lineno}: bad judgment: {exc}") from exc
            rows.append(
                ManifestRow(
                    sample_id=sample_id,
                    image=_resolve_image(root, image_name),
                    captions=(
                        Caption(text=captions[caption_id], source=CaptionSource.HUMAN_REFERENCE),
                    ),
                    judgments=judgments,
                    provenance="flickr8k_expert",
                )
            )
    if expected_pairs is not None and len(rows) != expected_pairs:
        raise IngestionError(
            f"flickr8k_expert: expected {expected_pairs} image-caption pairs, "
            f"found {len(rows)}"
        )
    return EvaluationManifest(dataset_id="flickr8k_expert", rows=rows)


def load_flickr8k_cf(path: str | Path) -> EvaluationManifest:
    """CrowdFlower binary judgments; each pair carries its individual votes."""
    root = Path(path)
    ann_path = root / "CrowdFlowerAnnotations.txt"
    token_path = root / "Flickr8k.token.txt"
    for p in (ann_path, token_path):
        if not p.exists():
            raise IngestionError(f"missing source file: {p}")
    captions = _read_token_file(token_path)
    rows: list[ManifestRow] = []
    with ann_path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise IngestionError(
                    f"{ann_path}:{lineno}: expected 5 tab-separated fields, got {len(parts)}"
                )
            image_name, caption_id, _percent, num_yes, num_no = parts
            if caption_id not in captions:
                raise IngestionError(f"{ann_path}:{lineno}: unknown caption id {caption_id!r}")
            sample_id = f"{image_name}#{caption_id}"
            try:
                yes, no = int(float(num_yes)), int(float(num_no))
            except ValueError as exc:
                raise IngestionError(f"{ann_path}:{lineno}: bad vote counts: {exc}") from exc
            votes = tuple(
                HumanJudgment(sample_id=sample_id, value=v, scale=JudgmentScale.BINARY_ACCURATE)
                for v in [1.0] * yes + [0.0] * no
            )
            rows.append(
                ManifestRow(
                    sample_id=sample_id,
                    image=_resolve_image(root, image_name),
                    captions=(
                        Caption(text=captions[caption_id], source=CaptionSource.HUMAN_REFERENCE),
                    ),
                    judgments=votes,
                    provenance="flickr8k_cf",
                )
            )
    if len(rows) != FLICKR8K_CF_PAIRS:
        logger.warning(
            "flickr8k_cf: found %d pairs where the canonical release reports ~%d; "
            "proceeding with the file as given",
            len(rows),
            FLICKR8K_CF_PAIRS,
        )
    return EvaluationManifest(dataset_id="flickr8k_cf", rows=rows)


def load_foil(path: str | Path, images_root: str | Path | None = None) -> EvaluationManifest:
    """True/foil caption pairs; the foil swaps a single noun phrase."""
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"missing source file: {path}")
    data = json.loads(path.read_text(encoding="utf-8"))
    annotations = data.get("annotations")
    if not isinstance(annotations, list):
        raise IngestionError(f"{path}: expected an 'annotations' list")
    file_names = {
        img["id"]: img["file_name"] for img in data.get("images", []) if "file_name" in img
    }
    groups: dict[object, list[dict]] = defaultdict(list)
    for ann in annotations:
        try:
            groups[ann["id"]].append(ann)
        except (TypeError, KeyError) as exc:
            raise IngestionError(f"{path}: annotation without an 'id': {exc}") from exc

    root = Path(images_root) if images_root is not None else path.parent
    rows: list[ManifestRow] = []
    for pair_id, anns in sorted(groups.items(), key=lambda kv: str(kv[0])):
        true_anns = [a for a in anns if not a.get("foil")]
        foil_anns = [a for a in anns if a.get("foil")]
        if len(true_anns) != 1 or len(foil_anns) != 1:
            raise IngestionError(
                f"{path}: pair {pair_id!r} must have exactly one true and one foil "
                f"caption, got {len(true_anns)}/{len(foil_anns)}"
            )
        true_ann, foil_ann = true_anns[0], foil_anns[0]
        if true_ann.get("image_id") != foil_ann.get("image_id"):
            raise IngestionError(f"{path}: pair {pair_id!r} spans two different images")
        true_text = str(true_ann["caption"]).strip()
        foil_text = str(foil_ann["caption"]).strip()
        if true_text.split() == foil_text.split():
            raise IngestionError(
                f"{path}: pair {pair_id!r} has identical true and foil texts"
            )
        image_id = true_ann.get("image_id")
        name = file_names.get(image_id, f"{image_id}.jpg")
        rows.append(
            ManifestRow(
                sample_id=f"foil-{pair_id}",
                image=str(root / name),
                captions=(
                    Caption(text=true_text, source=CaptionSource.HUMAN_REFERENCE),
                    Caption(text=foil_text, source=CaptionSource.FOIL),
                ),
                provenance="foil",
            )
        )
    return EvaluationManifest(dataset_id="foil", rows=rows)


def load_mhaldetect(
    path: str | Path, images_root: str | Path | None = None
) -> EvaluationManifest:
    """Model-written descriptions with per-sentence accuracy labels.

    Sentences labeled Inaccurate become hallucinated candidates; the
    ground-truth caption is the provided one, falling back to the
    Accurate sentences joined in order.
    """
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"missing source file: {path}")
    data = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise IngestionError(f"{path}: expected a JSON list of annotated descriptions")
    root = Path(images_root) if images_root is not None else path.parent
    rows: list[ManifestRow] = []
    for idx, item in enumerate(data):
        image = item.get("image")
        if not image:
            raise IngestionError(f"{path}: item {idx} has no 'image'")
        accurate: list[str] = []
        hallucinated: list[str] = []
        for s in item.get("sentences", []):
            label = str(s.get("label", "")).strip().lower()
            text = str(s.get("text", "")).strip()
            if not text:
                raise IngestionError(f"{path}: item {idx} has an empty sentence")
            if label == "accurate":
                accurate.append(text)
            elif label == "inaccurate":
                hallucinated.append(text)
            else:
                raise IngestionError(
                    f"{path}: item {idx} has unknown label {s.get('label')!r} "
                    "(expected Accurate or Inaccurate)"
                )
        ground_truth = str(item.get("ground_truth", "")).strip() or " ".join(accurate)
        if not ground_truth:
            raise IngestionError(
                f"{path}: item {idx} has no ground truth and no Accurate sentences"
            )
        captions = [Caption(text=ground_truth, source=CaptionSource.HUMAN_REFERENCE)]
        captions.extend(
            Caption(text=t, source=CaptionSource.HALLUCINATED) for t in hallucinated
        )
        rows.append(
            ManifestRow(
                sample_id=f"mhal-{idx:05d}-{Path(str(image)).stem}",
                image=str(root / str(image)),
                captions=tuple(captions),
                provenance="mhaldetect",
            )
        )
    return EvaluationManifest(dataset_id="mhaldetect", rows=rows)


def build_proposed_dataset(
    mscoco_path: str | Path,
    flickr30k_path: str | Path,
    mscoco_images_root: str | Path | None = None,
    flickr30k_images_root: str | Path | None = None,
    flickr30k_pairs: int = FLICKR30K_MERGE_PAIRS,
    strict: bool = False,
) -> EvaluationManifest:
    """Merge MSCOCO captions with a Flickr30k slice of image-caption pairs.

    Every merged image keeps exactly five reference captions; images with
    any other count are excluded (lenient) or fail the build (strict).
    The Flickr30k contribution is a deterministic slice of exactly
    ``flickr30k_pairs`` pairs, taken in sorted image order.
    """
    mscoco_path = Path(mscoco_path)
    flickr30k_path = Path(flickr30k_path)
    for p in (mscoco_path, flickr30k_path):
        if not p.exists():
            raise IngestionError(f"missing source file: {p}")
    if flickr30k_pairs % REFERENCES_PER_IMAGE != 0:
        raise IngestionError(
            f"flickr30k_pairs must be a multiple of {REFERENCES_PER_IMAGE}"
        )

    coco = json.loads(mscoco_path.read_text(encoding="utf-8"))
    coco_names = {img["id"]: img["file_name"] for img in coco.get("images", [])}
    coco_caps: dict[object, list[str]] = defaultdict(list)
    for ann in coco.get("annotations", []):
        coco_caps[ann["image_id"]].append(str(ann["caption"]).strip())

    coco_root = Path(mscoco_images_root) if mscoco_images_root else mscoco_path.parent
    f30k_root = (
        Path(flickr30k_images_root) if flickr30k_images_root else flickr30k_path.parent
    )

    rows: list[ManifestRow] = []
    excluded = 0
    for image_id in sorted(coco_caps, key=str):
        texts = coco_caps[image_id]
        if len(texts) != REFERENCES_PER_IMAGE:
            if strict:
                raise IngestionError(
                    f"mscoco image {image_id} has {len(texts)} captions, need exactly "
                    f"{REFERENCES_PER_IMAGE}"
                )
            excluded += 1
            continue
        name = coco_names.get(image_id, f"{image_id}.jpg")
        rows.append(
            ManifestRow(
                sample_id=f"coco-{image_id}",
                image=str(coco_root / name),
                captions=tuple(
                    Caption(text=t, source=CaptionSource.HUMAN_REFERENCE) for t in texts
                ),
                provenance=f"mscoco:{mscoco_path.name}",
            )
        )

    f30k_caps: dict[str, list[str]] = defaultdict(list)
    for caption_id, text in _read_token_file(flickr30k_path).items():
        image_name = caption_id.split("#", 1)[0]
        f30k_caps[image_name].append(text)

    complete = []
    for image_name in sorted(f30k_caps):
        if len(f30k_caps[image_name]) != REFERENCES_PER_IMAGE:
            if strict:
                raise IngestionError(
                    f"flickr30k image {image_name} has {len(f30k_caps[image_name])} "
                    f"captions, need exactly {REFERENCES_PER_IMAGE}"
                )
            excluded += 1
            continue
        complete.append(image_name)

    needed_images = flickr30k_pairs // REFERENCES_PER_IMAGE
    if len(complete) < needed_images:
        raise IngestionError(
            f"flickr30k slice needs {needed_images} images with "
            f"{REFERENCES_PER_IMAGE} captions, found {len(complete)}"
        )
    for image_name in complete[:needed_images]:
        rows.append(
            ManifestRow(
                sample_id=f"f30k-{image_name}",
                image=str(f30k_root / image_name),
                captions=tuple(
                    Caption(text=t, source=CaptionSource.HUMAN_REFERENCE)
                    for t in f30k_caps[image_name]
                ),
                provenance=f"flickr30k:{flickr30k_path.name}",
            )
        )

    if excluded:
        logger.warning(
            "proposed dataset merge excluded %d images without exactly %d captions",
            excluded,
            REFERENCES_PER_IMAGE,
        )
    ids = [r.sample_id for r in rows]
    if len(set(ids)) != len(ids):
        raise IngestionError("merged manifest has colliding sample ids")
    return EvaluationManifest(dataset_id="proposed_mscoco_flickr30k", rows=rows)
