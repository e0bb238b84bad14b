from __future__ import annotations

import random

import pytest

from capcycle import protocols
from capcycle.backends import stubs
from capcycle.correlation import brute_force_tau_oracle
from capcycle.errors import ContractError, DegenerateInputError, IngestionError
from capcycle.types import (
    BackendDescriptor,
    Caption,
    HumanJudgment,
    ImageRef,
    JudgmentScale,
    ScoreRecord,
)
from conftest import make_manifest, oracle_for_manifest

GEN = BackendDescriptor(kind="generator", name="stub-noise", version="1")
ENC = BackendDescriptor(kind="encoder", name="stub-pixel", version="1")
ALT_GEN = BackendDescriptor(kind="generator", name="stub-noise", version="2")


def make_record(
    sample_id: str,
    score: float,
    source: str = "human_reference",
    image_hash: str | None = None,
    seed: int = 0,
    generator: BackendDescriptor = GEN,
) -> ScoreRecord:
    h = image_hash or format(abs(hash(sample_id)) % 16**8, "08x") * 8
    ref = ImageRef(content_hash=h[:64], uri=f"{sample_id}.png", width=4, height=4)
    return ScoreRecord(
        sample_id=sample_id,
        caption=Caption(text=f"caption for {sample_id} ({source})", source=source),
        original=ref,
        generated=ref,
        score=score,
        generator_id=generator,
        encoder_id=ENC,
        seed=seed,
        created_at="2026-01-01T00:00:00+00:00",
    )


def likert(sample_id: str, *values: int) -> list[HumanJudgment]:
    return [
        HumanJudgment(sample_id=sample_id, value=v, scale=JudgmentScale.LIKERT_1_4)
        for v in values
    ]


def votes(sample_id: str, *values: int) -> list[HumanJudgment]:
    return [
        HumanJudgment(sample_id=sample_id, value=v, scale=JudgmentScale.BINARY_ACCURATE)
        for v in values
    ]


class TestExpertProtocol:
    def test_flattening_multiplies_pairs_by_judges(self):
        records = [make_record(f"s{i}", 0.1 * i) for i in range(4)]
        judgments = [j for i in range(4) for j in likert(f"s{i}", 1, 2, 3)]
        report = protocols.flickr8k_expert_protocol(records, judgments)
        assert report.n == 12
        assert report.variant == "tau_c"

    def test_metric_equal_to_judgment_mean_is_perfectly_concordant(self):
        records = [make_record("a", 0.2), make_record("b", 0.9)]
        judgments = likert("a", 1, 1, 1) + likert("b", 4, 4, 4)
        report = protocols.flickr8k_expert_protocol(records, judgments)
        assert report.tau == 1.0

    def test_synthetic_set_matches_brute_force_oracle(self):
        rng = random.Random(42)
        records = []
        judgments = []
        x, y = [], []
        for i in range(100):
            score = rng.randint(0, 20) / 20
            records.append(make_record(f"s{i:03d}", score))
            vals = [rng.randint(1, 4) for _ in range(3)]
            judgments.extend(likert(f"s{i:03d}", *vals))
            for v in vals:
                x.append(score)
                y.append(v)
        report = protocols.flickr8k_expert_protocol(records, judgments)
        oracle = brute_force_tau_oracle(x, y, "tau_c")
        assert report.tau == oracle.tau
        assert report.concordant == oracle.concordant
        assert report.discordant == oracle.discordant

    def test_strict_mode_rejects_wrong_judge_count(self):
        records = [make_record("a", 0.5), make_record("b", 0.6)]
        judgments = likert("a", 1, 2, 3) + likert("b", 1, 2)
        with pytest.raises(IngestionError, match="expected exactly 3"):
            protocols.flickr8k_expert_protocol(records, judgments)

    def test_lenient_mode_excludes_and_counts(self):
        records = [make_record("a", 0.5), make_record("b", 0.6), make_record("c", 0.1)]
        judgments = likert("a", 1, 2, 3) + likert("b", 1, 2) + likert("c", 4, 4, 1)
        report = protocols.flickr8k_expert_protocol(records, judgments, strict=False)
        assert report.excluded == 1
        assert report.n == 6


class TestCfProtocol:
    def test_yes_fraction_is_vote_mean(self):
        records = [make_record("a", 0.9), make_record("b", 0.1)]
        judgments = votes("a", 1, 1, 0) + votes("b", 0, 0, 1)
        report = protocols.flickr8k_cf_protocol(records, judgments)
        # fractions 2/3 vs 1/3 concordant with scores 0.9 vs 0.1
        assert report.variant == "tau_b"
        assert report.tau == 1.0

    def test_unanimous_yes_everywhere_is_degenerate(self):
        records = [make_record("a", 0.9), make_record("b", 0.1)]
        judgments = votes("a", 1, 1, 1) + votes("b", 1, 1, 1)
        with pytest.raises(DegenerateInputError):
            protocols.flickr8k_cf_protocol(records, judgments)

    def test_pairs_with_too_few_votes_are_excluded_with_count(self):
        records = [make_record(s, v) for s, v in [("a", 0.9), ("b", 0.5), ("c", 0.1)]]
        judgments = votes("a", 1, 1, 0) + votes("b", 1) + votes("c", 0, 0, 1)
        report = protocols.flickr8k_cf_protocol(records, judgments)
        assert report.excluded == 1
        assert report.n == 2

    def test_synthetic_set_matches_brute_force_oracle(self):
        rng = random.Random(9)
        records, judgments, x, y = [], [], [], []
        for i in range(500):
            score = rng.randint(0, 50) / 50
            records.append(make_record(f"s{i:03d}", score))
            n_votes = rng.randint(3, 6)
            vals = [rng.randint(0, 1) for _ in range(n_votes)]
            judgments.extend(votes(f"s{i:03d}", *vals))
            x.append(score)
            y.append(sum(vals) / len(vals))
        report = protocols.flickr8k_cf_protocol(records, judgments)
        oracle = brute_force_tau_oracle(x, y, "tau_b")
        assert report.tau == oracle.tau
        assert (report.concordant, report.discordant) == (
            oracle.concordant,
            oracle.discordant,
        )


class TestFoilProtocol:
    def _pairs(self, true_scores, foil_scores):
        true_records = [
            make_record(f"p{i}", s, source="human_reference")
            for i, s in enumerate(true_scores)
        ]
        foil_records = [
            make_record(f"p{i}", s, source="foil") for i, s in enumerate(foil_scores)
        ]
        return true_records, foil_records

    def test_spec_example_one_third(self):
        true_records, foil_records = self._pairs([0.9, 0.8, 0.5], [0.7, 0.8, 0.6])
        report = protocols.foil_pairwise_protocol(true_records, foil_records)
        assert report.accuracy == pytest.approx(1 / 3)
        assert (report.wins, report.ties, report.losses) == (1, 1, 1)

    def test_all_wins(self):
        t, f = self._pairs([0.9, 0.8], [0.1, 0.2])
        assert protocols.foil_pairwise_protocol(t, f).accuracy == 1.0

    def test_half_credit_policy(self):
        t, f = self._pairs([0.9, 0.8, 0.5], [0.7, 0.8, 0.6])
        report = protocols.foil_pairwise_protocol(t, f, tie_policy="half")
        assert report.accuracy == pytest.approx(0.5)
        assert report.tie_policy == "half"

    def test_empty_is_contract_error_never_nan(self):
        with pytest.raises(ContractError):
            protocols.foil_pairwise_protocol([], [])

    def test_misaligned_ids_rejected(self):
        t, _ = self._pairs([0.9], [0.1])
        _, f = self._pairs([0.9, 0.5], [0.1, 0.2])
        with pytest.raises(ContractError, match="not aligned"):
            protocols.foil_pairwise_protocol(t, f)

    def test_mixed_backends_within_pair_rejected(self):
        t = [make_record("p0", 0.9)]
        f = [make_record("p0", 0.5, source="foil", generator=ALT_GEN)]
        with pytest.raises(ContractError, match="mixes"):
            protocols.foil_pairwise_protocol(t, f)

    def test_swapped_arguments_complement_without_ties(self):
        t, f = self._pairs([0.9, 0.2, 0.7, 0.1], [0.5, 0.6, 0.3, 0.8])
        fwd = protocols.foil_pairwise_protocol(t, f).accuracy
        # swapping sides needs matching source tags; rebuild with roles flipped
        t2, f2 = self._pairs([0.5, 0.6, 0.3, 0.8], [0.9, 0.2, 0.7, 0.1])
        rev = protocols.foil_pairwise_protocol(t2, f2).accuracy
        assert fwd + rev == pytest.approx(1.0)


class TestMhaldetectProtocol:
    def test_per_image_pairing(self):
        gt = [make_record("img0", 0.8)]
        hall = [
            make_record("img0", 0.5, source="hallucinated"),
            make_record("img0", 0.6, source="hallucinated"),
        ]
        report = protocols.mhaldetect_pairwise_protocol(gt, hall)
        assert report.n == 2 and report.accuracy == 1.0

    def test_tie_is_a_miss(self):
        gt = [make_record("img0", 0.5)]
        hall = [make_record("img0", 0.5, source="hallucinated")]
        report = protocols.mhaldetect_pairwise_protocol(gt, hall)
        assert report.accuracy == 0.0 and report.ties == 1

    def test_planted_win_rate_is_exact(self):
        gt, hall = [], []
        for i in range(200):
            sid = f"img{i:03d}"
            gt.append(make_record(sid, 0.8))
            hall_score = 0.5 if i < 150 else 0.9
            hall.append(make_record(sid, hall_score, source="hallucinated"))
        report = protocols.mhaldetect_pairwise_protocol(gt, hall)
        assert report.accuracy == 0.75
        assert report.n == 200

    def test_one_sided_images_excluded_and_counted(self):
        gt = [make_record("a", 0.8), make_record("orphan-gt", 0.9)]
        hall = [
            make_record("a", 0.1, source="hallucinated"),
            make_record("orphan-hall", 0.2, source="hallucinated"),
        ]
        report = protocols.mhaldetect_pairwise_protocol(gt, hall)
        assert report.n == 1
        assert report.excluded == 2


class TestGapExperiment:
    def test_oracle_stub_separates_correct_from_mismatched(self, store, image_dir):
        manifest = make_manifest(image_dir, 10)
        gen = oracle_for_manifest(manifest)
        report = protocols.likert_gap_experiment(
            manifest, gen, stubs.PixelEncoder(), store, pairing_seed=7
        )
        assert report.mean_correct == 1.0
        assert report.mean_incorrect < 1.0
        assert report.gap > 0
        assert report.n_correct == 10 and report.n_incorrect == 10

    def test_single_image_manifest_rejected(self, store, image_dir):
        manifest = make_manifest(image_dir, 1)
        with pytest.raises(ContractError):
            protocols.likert_gap_experiment(
                manifest, stubs.NoiseGenerator(), stubs.PixelEncoder(), store
            )

    def test_deterministic_given_pairing_seed(self, store, image_dir):
        manifest = make_manifest(image_dir, 6, refs_per_image=2)
        gen = oracle_for_manifest(manifest)
        enc = stubs.PixelEncoder()
        a = protocols.likert_gap_experiment(manifest, gen, enc, store, pairing_seed=3)
        b = protocols.likert_gap_experiment(manifest, gen, enc, store, pairing_seed=3)
        assert a.to_dict() == b.to_dict()
        assert [r.score for r in a.incorrect_records] == [
            r.score for r in b.incorrect_records
        ]

    def test_different_pairing_seed_changes_mismatches(self, store, image_dir):
        manifest = make_manifest(image_dir, 8)
        gen = oracle_for_manifest(manifest)
        enc = stubs.PixelEncoder()
        a = protocols.likert_gap_experiment(manifest, gen, enc, store, pairing_seed=1)
        b = protocols.likert_gap_experiment(manifest, gen, enc, store, pairing_seed=2)
        pair_a = [r.caption.text for r in a.incorrect_records]
        pair_b = [r.caption.text for r in b.incorrect_records]
        assert pair_a != pair_b

    def test_mismatch_never_uses_own_reference(self, store, image_dir):
        manifest = make_manifest(image_dir, 5)
        gen = oracle_for_manifest(manifest)
        enc = stubs.PixelEncoder()
        own = {
            row.sample_id: {c.text for c in row.captions} for row in manifest.rows
        }
        for seed in range(10):
            report = protocols.likert_gap_experiment(
                manifest, gen, enc, store, pairing_seed=seed
            )
            for r in report.incorrect_records:
                assert r.caption.text not in own[r.sample_id]


class TestPurity:
    def test_protocols_stable_over_reruns(self):
        records = [make_record(f"s{i}", 0.1 * i) for i in range(4)]
        judgments = [j for i in range(4) for j in likert(f"s{i}", 1, 2, (i % 4) + 1)]
        r1 = protocols.flickr8k_expert_protocol(records, judgments)
        r2 = protocols.flickr8k_expert_protocol(records, judgments)
        assert r1 == r2
