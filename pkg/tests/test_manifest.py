from __future__ import annotations

import json

import pytest

from capcycle.errors import IngestionError
from capcycle.manifest import (
    EvaluationManifest,
    ManifestRow,
    read_manifest,
    write_manifest,
)
from capcycle.types import Caption, HumanJudgment, JudgmentScale
from conftest import make_image, make_manifest


class TestRoundTrip:
    def test_write_read_equality(self, tmp_path, image_dir):
        manifest = make_manifest(image_dir, 4, refs_per_image=2)
        path = tmp_path / "m.jsonl"
        write_manifest(manifest, path)
        loaded = read_manifest(path)
        assert loaded == manifest

    def test_serialize_load_serialize_is_stable(self, tmp_path, image_dir):
        manifest = make_manifest(image_dir, 3)
        p1 = tmp_path / "a.jsonl"
        p2 = tmp_path / "b.jsonl"
        write_manifest(manifest, p1)
        write_manifest(read_manifest(p1), p2)
        assert p1.read_text() == p2.read_text()

    def test_wire_format_is_bit_exact(self, tmp_path):
        row = ManifestRow(
            sample_id="s1",
            image="img/x.png",
            captions=(Caption(text="a dog", source="human_reference"),),
            judgments=(
                HumanJudgment(sample_id="s1", value=3, scale=JudgmentScale.LIKERT_1_4),
            ),
            provenance="unit",
        )
        manifest = EvaluationManifest(dataset_id="demo", rows=[row])
        path = tmp_path / "wire.jsonl"
        write_manifest(manifest, path)
        lines = path.read_text().splitlines()
        assert json.loads(lines[0]) == {"dataset_id": "demo", "schema_version": 1}
        assert lines[1] == (
            '{"captions": [{"source": "human_reference", "text": "a dog"}], '
            '"image": "img/x.png", '
            '"judgments": [{"scale": "likert_1_4", "value": 3}], '
            '"provenance": "unit", "sample_id": "s1"}'
        )


class TestReadErrors:
    def test_missing_header(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"sample_id": "s", "image": "x.png"}\n')
        with pytest.raises(IngestionError, match="header"):
            read_manifest(path)

    def test_unsupported_schema_version(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"dataset_id": "d", "schema_version": 99}\n')
        with pytest.raises(IngestionError, match="schema_version"):
            read_manifest(path)

    def test_bad_json_line_names_lineno(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"dataset_id": "d", "schema_version": 1}\nnot-json\n')
        with pytest.raises(IngestionError, match=":2"):
            read_manifest(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(IngestionError, match="empty"):
            read_manifest(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(IngestionError, match="not found"):
            read_manifest(tmp_path / "nope.jsonl")


class TestValidation:
    def test_duplicate_sample_ids_reported(self, image_dir):
        ref = make_image(image_dir, "dup")
        rows = [
            ManifestRow(sample_id="s", image=ref.uri),
            ManifestRow(sample_id="s", image=ref.uri),
        ]
        issues = EvaluationManifest(dataset_id="d", rows=rows).validate()
        assert [i.reason for i in issues] == ["duplicate sample_id"]

    def test_unresolvable_image_reported(self, tmp_path):
        rows = [ManifestRow(sample_id="s", image=str(tmp_path / "missing.png"))]
        issues = EvaluationManifest(dataset_id="d", rows=rows).validate()
        assert len(issues) == 1 and "not resolvable" in issues[0].reason

    def test_scale_consistency_per_dataset(self, image_dir):
        ref = make_image(image_dir, "scale")
        rows = [
            ManifestRow(
                sample_id="s",
                image=ref.uri,
                judgments=(
                    HumanJudgment(sample_id="s", value=1, scale=JudgmentScale.BINARY_ACCURATE),
                ),
            )
        ]
        issues = EvaluationManifest(dataset_id="flickr8k_expert", rows=rows).validate()
        assert len(issues) == 1 and "inconsistent" in issues[0].reason
        assert EvaluationManifest(dataset_id="other", rows=rows).validate() == []

    def test_every_row_reported_no_silent_drops(self, tmp_path, image_dir):
        ref = make_image(image_dir, "ok")
        rows = [
            ManifestRow(sample_id="good", image=ref.uri),
            ManifestRow(sample_id="bad1", image=str(tmp_path / "a.png")),
            ManifestRow(sample_id="bad2", image=str(tmp_path / "b.png")),
        ]
        issues = EvaluationManifest(dataset_id="d", rows=rows).validate()
        assert sorted(i.sample_id for i in issues) == ["bad1", "bad2"]

    def test_require_valid_raises_with_details(self, tmp_path):
        rows = [ManifestRow(sample_id="s", image=str(tmp_path / "missing.png"))]
        with pytest.raises(IngestionError, match="invalid rows"):
            EvaluationManifest(dataset_id="d", rows=rows).require_valid()
