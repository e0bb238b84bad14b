"""Validated evaluation manifests and their JSONL wire format.

A manifest file is UTF-8 JSONL: the first line is a header
``{"dataset_id": str, "schema_version": int}`` and every following line
is one row with the fixed shape

    {"sample_id": str, "image": str,
     "captions":  [{"text": str, "source": str}],
     "judgments": [{"value": num, "scale": str}],
     "provenance": str}

Keys are emitted sorted so serialisation round-trips bit-exactly.
Validation is total: every row either passes all invariants or is
reported with a machine-readable reason; nothing is dropped silently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ContractError, IngestionError
from .types import Caption, HumanJudgment, JudgmentScale

SCHEMA_VERSION = 1

# dataset ids with a pinned judgment scale; others are unconstrained
DATASET_SCALES = {
    "flickr8k_expert": JudgmentScale.LIKERT_1_4,
    "flickr8k_cf": JudgmentScale.BINARY_ACCURATE,
}


@dataclass(frozen=True)
class ManifestRow:
    sample_id: str
    image: str
    captions: tuple[Caption, ...] = ()
    judgments: tuple[HumanJudgment, ...] = ()
    provenance: str = ""

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "image": self.image,
            "captions": [
                {"text": c.text, "source": c.source.value} for c in self.captions
            ],
            "judgments": [
                {"value": j.value, "scale": j.scale.value} for j in self.judgments
            ],
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ManifestRow":
        sample_id = obj["sample_id"]
        return cls(
            sample_id=sample_id,
            image=obj["image"],
            captions=tuple(
                Caption(text=c["text"], source=c["source"]) for c in obj.get("captions", [])
            ),
            judgments=tuple(
                HumanJudgment(sample_id=sample_id, value=j["value"], scale=j["scale"])
                for j in obj.get("judgments", [])
            ),
            provenance=obj.get("provenance", ""),
        )


@dataclass(frozen=True)
class RowIssue:
    sample_id: str
    reason: str

    def to_dict(self) -> dict:
        return {"sample_id": self.sample_id, "reason": self.reason}


@dataclass
class EvaluationManifest:
    dataset_id: str
    rows: list[ManifestRow] = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def __len__(self) -> int:
        return len(self.rows)

    def judgments(self) -> list[HumanJudgment]:
        return [j for row in self.rows for j in row.judgments]

    def validate(self, check_images: bool = True) -> list[RowIssue]:
        issues: list[RowIssue] = []
        seen: set[str] = set()
        expected_scale = DATASET_SCALES.get(self.dataset_id)
        for row in self.rows:
            if row.sample_id in seen:
                issues.append(RowIssue(row.sample_id, "duplicate sample_id"))
            seen.add(row.sample_id)
            if check_images and not Path(row.image).exists():
                issues.append(RowIssue(row.sample_id, f"image not resolvable: {row.image}"))
            if expected_scale is not None:
                for j in row.judgments:
                    if j.scale is not expected_scale:
                        issues.append(
                            RowIssue(
                                row.sample_id,
                                f"judgment scale {j.scale.value} inconsistent with "
                                f"dataset {self.dataset_id}",
                            )
                        )
                        break
        return issues

    def require_valid(self, check_images: bool = True) -> "EvaluationManifest":
        issues = self.validate(check_images=check_images)
        if issues:
            detail = "; ".join(f"{i.sample_id}: {i.reason}" for i in issues[:5])
            raise IngestionError(
                f"manifest {self.dataset_id!r} has {len(issues)} invalid rows ({detail}...)"
            )
        return self


def write_manifest(manifest: EvaluationManifest, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        header = {
            "dataset_id": manifest.dataset_id,
            "schema_version": manifest.schema_version,
        }
        fh.write(json.dumps(header, sort_keys=True, ensure_ascii=False) + "\n")
        for row in manifest.rows:
            fh.write(json.dumps(row.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")


def read_manifest(path: str | Path, check_images: bool = False) -> EvaluationManifest:
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"manifest file not found: {path}")
    rows: list[ManifestRow] = []
    header: dict | None = None
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except ValueError as exc:
                raise IngestionError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if header is None:
                if "schema_version" not in obj or "dataset_id" not in obj:
                    raise IngestionError(
                        f"{path}:1: first line must be the manifest header "
                        "{'dataset_id', 'schema_version'}"
                    )
                if obj["schema_version"] != SCHEMA_VERSION:
                    raise IngestionError(
                        f"{path}: unsupported schema_version {obj['schema_version']}"
                    )
                header = obj
                continue
            try:
                rows.append(ManifestRow.from_dict(obj))
            except (KeyError, ContractError, ValueError) as exc:
                raise IngestionError(f"{path}:{lineno}: bad row: {exc}") from exc
    if header is None:
        raise IngestionError(f"{path}: empty manifest file (missing header line)")
    manifest = EvaluationManifest(
        dataset_id=header["dataset_id"],
        rows=rows,
        schema_version=header["schema_version"],
    )
    if check_images:
        manifest.require_valid(check_images=True)
    return manifest
