"""ScoreRecord serialization (JSONL) and cross-record consistency checks."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ContractError, IngestionError
from .types import BackendDescriptor, Caption, ImageRef, ScoreRecord


def record_to_dict(record: ScoreRecord) -> dict:
    return {
        "sample_id": record.sample_id,
        "caption": {
            "text": record.caption.text,
            "source": record.caption.source.value,
            "token_limit": record.caption.token_limit,
        },
        "original": _image_to_dict(record.original),
        "generated": _image_to_dict(record.generated),
        "score": record.score,
        "generator": record.generator_id.to_dict(),
        "encoder": record.encoder_id.to_dict(),
        "seed": record.seed,
        "created_at": record.created_at,
    }


def _image_to_dict(ref: ImageRef) -> dict:
    return {
        "content_hash": ref.content_hash,
        "uri": ref.uri,
        "width": ref.width,
        "height": ref.height,
    }


def record_from_dict(obj: dict) -> ScoreRecord:
    cap = obj["caption"]
    return ScoreRecord(
        sample_id=obj["sample_id"],
        caption=Caption(
            text=cap["text"],
            source=cap["source"],
            token_limit=cap.get("token_limit", 100),
        ),
        original=_image_from_dict(obj["original"]),
        generated=_image_from_dict(obj["generated"]),
        score=float(obj["score"]),
        generator_id=BackendDescriptor.from_dict(obj["generator"]),
        encoder_id=BackendDescriptor.from_dict(obj["encoder"]),
        seed=int(obj["seed"]),
        created_at=obj["created_at"],
    )


def _image_from_dict(obj: dict) -> ImageRef:
    return ImageRef(
        content_hash=obj["content_hash"],
        uri=obj["uri"],
        width=int(obj["width"]),
        height=int(obj["height"]),
    )


def record_json(record: ScoreRecord) -> str:
    return json.dumps(record_to_dict(record), sort_keys=True, ensure_ascii=False)


def write_records(records: Iterable[ScoreRecord], path: str | Path) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(record_json(record) + "\n")
            n += 1
    return n


def read_records(path: str | Path) -> list[ScoreRecord]:
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"records file not found: {path}")
    out: list[ScoreRecord] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(record_from_dict(json.loads(line)))
            except (KeyError, ValueError, ContractError) as exc:
                raise IngestionError(f"{path}:{lineno}: bad record: {exc}") from exc
    return out


def require_uniform_backends(
    records: Sequence[ScoreRecord], allow_mixed: bool = False
) -> dict[str, list[str]]:
    """All records in one report must share a backend stack, or carry an
    explicit acknowledgement that mixing is intended."""
    generators = sorted({r.generator_id.canonical() for r in records})
    encoders = sorted({r.encoder_id.canonical() for r in records})
    if not allow_mixed and (len(generators) > 1 or len(encoders) > 1):
        raise ContractError(
            f"records mix {len(generators)} generator and {len(encoders)} encoder "
            "descriptors; pass allow_mixed to combine them anyway"
        )
    return {"generators": generators, "encoders": encoders}


def config_digest(records: Sequence[ScoreRecord]) -> str:
    """Stable fingerprint of the backend stack(s) behind a set of records."""
    material = "\n".join(
        sorted(
            {r.generator_id.canonical() for r in records}
            | {r.encoder_id.canonical() for r in records}
        )
    )
    return hashlib.sha256(material.encode("utf-8")).hexdigest()
