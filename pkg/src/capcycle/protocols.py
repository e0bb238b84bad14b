"""Benchmark protocols: each consumes score records (plus human judgments
where the dataset has them) and emits one statistic.

- Expert Likert judgments: flatten to one (score, judgment) sample per
  judge and correlate with tau_c.
- Crowd binary judgments: yes-fraction per pair, correlate with tau_b.
- True-vs-foil and ground-truth-vs-hallucination: pairwise accuracy at
  strict inequality (a tie is a miss; half-credit is available as an
  explicit policy and reports always name the policy used).
- Gap experiment: mean cycle score for matching captions versus captions
  of other images, demonstrating the metric separates the two.

Every protocol is a pure function of its inputs; rerunning over cached
records cannot change the statistic.
"""

from __future__ import annotations

import dataclasses
import random
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

from .backends.base import Encoder, Generator
from .cache import CacheStore
from .correlation import CorrelationReport, kendall_tau_b, kendall_tau_c
from .errors import ContractError, IngestionError
from .manifest import EvaluationManifest
from .pipeline import score_caption
from .similarity import aggregate_scores
from .types import CaptionSource, HumanJudgment, JudgmentScale, ScoreRecord
from . import images

EXPERT_JUDGES_PER_PAIR = 3
MIN_BINARY_VOTES = 3

TiePolicy = str  # "strict" | "half"


def _records_by_id(records: Sequence[ScoreRecord], role: str) -> dict[str, ScoreRecord]:
    by_id: dict[str, ScoreRecord] = {}
    for r in records:
        if r.sample_id in by_id:
            raise ContractError(f"duplicate {role} record for sample {r.sample_id!r}")
        by_id[r.sample_id] = r
    return by_id


def _judgments_by_id(
    judgments: Sequence[HumanJudgment], scale: JudgmentScale
) -> dict[str, list[HumanJudgment]]:
    grouped: dict[str, list[HumanJudgment]] = defaultdict(list)
    for j in judgments:
        if j.scale is not scale:
            raise ContractError(
                f"judgment for {j.sample_id!r} has scale {j.scale.value}, "
                f"expected {scale.value}"
            )
        grouped[j.sample_id].append(j)
    return grouped


def flickr8k_expert_protocol(
    records: Sequence[ScoreRecord],
    judgments: Sequence[HumanJudgment],
    strict: bool = True,
) -> CorrelationReport:
    """Flatten expert scores (one sample per judge) and correlate with tau_c.

    Every scored pair must carry exactly three Likert judgments; in
    lenient mode nonconforming pairs are excluded and counted in the
    report instead of failing the run.
    """
    grouped = _judgments_by_id(judgments, JudgmentScale.LIKERT_1_4)
    by_id = _records_by_id(records, "metric")
    x: list[float] = []
    y: list[float] = []
    excluded = 0
    for sample_id, record in by_id.items():
        pair_judgments = grouped.get(sample_id, [])
        if len(pair_judgments) != EXPERT_JUDGES_PER_PAIR:
            if strict:
                raise IngestionError(
                    f"pair {sample_id!r} has {len(pair_judgments)} expert judgments, "
                    f"expected exactly {EXPERT_JUDGES_PER_PAIR}"
                )
            excluded += 1
            continue
        for j in pair_judgments:
            x.append(record.score)
            y.append(j.value)
    report = kendall_tau_c(x, y)
    return dataclasses.replace(report, excluded=excluded)


def flickr8k_cf_protocol(
    records: Sequence[ScoreRecord],
    judgments: Sequence[HumanJudgment],
    min_votes: int = MIN_BINARY_VOTES,
) -> CorrelationReport:
    """Yes-fraction per pair from binary crowd votes, correlated with tau_b.

    Pairs with fewer than ``min_votes`` votes are excluded; the exclusion
    count lands in the report.
    """
    grouped = _judgments_by_id(judgments, JudgmentScale.BINARY_ACCURATE)
    by_id = _records_by_id(records, "metric")
    x: list[float] = []
    y: list[float] = []
    excluded = 0
    for sample_id, record in by_id.items():
        votes = grouped.get(sample_id, [])
        if len(votes) < min_votes:
            excluded += 1
            continue
        x.append(record.score)
        y.append(sum(v.value for v in votes) / len(votes))
    report = kendall_tau_b(x, y)
    return dataclasses.replace(report, excluded=excluded)


@dataclass(frozen=True)
class PairwiseReport:
    """Accuracy of the metric at ranking the true side above the corrupted one."""

    protocol: str
    accuracy: float
    n: int
    wins: int
    ties: int
    losses: int
    excluded: int
    tie_policy: TiePolicy

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _pairwise_accuracy(
    protocol: str,
    pairs: list[tuple[float, float]],
    excluded: int,
    tie_policy: TiePolicy,
) -> PairwiseReport:
    if tie_policy not in ("strict", "half"):
        raise ContractError(f"unknown tie policy {tie_policy!r}")
    if not pairs:
        raise ContractError(f"{protocol}: no aligned pairs to evaluate")
    wins = sum(1 for true_s, other_s in pairs if true_s > other_s)
    ties = sum(1 for true_s, other_s in pairs if true_s == other_s)
    losses = len(pairs) - wins - ties
    credit = wins + (0.5 * ties if tie_policy == "half" else 0.0)
    return PairwiseReport(
        protocol=protocol,
        accuracy=credit / len(pairs),
        n=len(pairs),
        wins=wins,
        ties=ties,
        losses=losses,
        excluded=excluded,
        tie_policy=tie_policy,
    )


def foil_pairwise_protocol(
    true_records: Sequence[ScoreRecord],
    foil_records: Sequence[ScoreRecord],
    tie_policy: TiePolicy = "strict",
) -> PairwiseReport:
    """Share of pairs where the true caption outscores its foil."""
    trues = _records_by_id(true_records, "true")
    foils = _records_by_id(foil_records, "foil")
    if set(trues) != set(foils):
        missing = sorted(set(trues) ^ set(foils))[:5]
        raise ContractError(
            f"true/foil records are not aligned 1:1 (first differences: {missing})"
        )
    pairs = []
    for sample_id in trues:
        t, f = trues[sample_id], foils[sample_id]
        if (
            t.original.content_hash != f.original.content_hash
            or t.seed != f.seed
            or t.generator_id != f.generator_id
            or t.encoder_id != f.encoder_id
        ):
            raise ContractError(
                f"pair {sample_id!r} mixes images, seeds, or backends"
            )
        pairs.append((t.score, f.score))
    return _pairwise_accuracy("foil_pairwise", pairs, excluded=0, tie_policy=tie_policy)


def mhaldetect_pairwise_protocol(
    gt_records: Sequence[ScoreRecord],
    hallucinated_records: Sequence[ScoreRecord],
    tie_policy: TiePolicy = "strict",
) -> PairwiseReport:
    """Accuracy over (ground truth, hallucinated sentence) pairs per image.

    Images present on only one side are excluded and counted.
    """
    gts = _records_by_id(gt_records, "ground-truth")
    hallucinated: dict[str, list[ScoreRecord]] = defaultdict(list)
    for r in hallucinated_records:
        hallucinated[r.sample_id].append(r)
    excluded = len(set(gts) ^ set(hallucinated))
    pairs = []
    for sample_id in gts.keys() & hallucinated.keys():
        for h in hallucinated[sample_id]:
            pairs.append((gts[sample_id].score, h.score))
    return _pairwise_accuracy(
        "mhaldetect_pairwise", pairs, excluded=excluded, tie_policy=tie_policy
    )


@dataclass(frozen=True)
class GapReport:
    """Mean cycle score for matching vs mismatched captions."""

    mean_correct: float
    mean_incorrect: float
    gap: float
    n_correct: int
    n_incorrect: int
    pairing_seed: int
    correct_records: tuple[ScoreRecord, ...] = ()
    incorrect_records: tuple[ScoreRecord, ...] = ()

    def to_dict(self) -> dict:
        return {
            "mean_correct": self.mean_correct,
            "mean_incorrect": self.mean_incorrect,
            "gap": self.gap,
            "n_correct": self.n_correct,
            "n_incorrect": self.n_incorrect,
            "pairing_seed": self.pairing_seed,
        }


def likert_gap_experiment(
    manifest: EvaluationManifest,
    generator: Generator,
    encoder: Encoder,
    store: CacheStore,
    pairing_seed: int = 0,
    seed: int = 0,
) -> GapReport:
    """Score every image against its own references and against one
    reference of a different image, sampled uniformly by pairing_seed.

    The mismatch partner is never the image itself, so a manifest with a
    single image has no valid mismatch and is rejected.
    """
    rows = [
        row
        for row in manifest.rows
        if any(c.source is CaptionSource.HUMAN_REFERENCE for c in row.captions)
    ]
    if len(rows) < 2:
        raise ContractError(
            "gap experiment needs at least 2 images with reference captions"
        )
    refs_per_row = [
        [c for c in row.captions if c.source is CaptionSource.HUMAN_REFERENCE]
        for row in rows
    ]
    rng = random.Random(pairing_seed)
    correct: list[ScoreRecord] = []
    incorrect: list[ScoreRecord] = []
    for i, row in enumerate(rows):
        image = images.ref_from_file(row.image)
        for caption in refs_per_row[i]:
            correct.append(
                score_caption(
                    image, caption, generator, encoder, store,
                    seed=seed, sample_id=row.sample_id,
                )
            )
        other_indices = [k for k in range(len(rows)) if k != i]
        j = other_indices[rng.randrange(len(other_indices))]
        mismatched = refs_per_row[j][rng.randrange(len(refs_per_row[j]))]
        incorrect.append(
            score_caption(
                image, mismatched, generator, encoder, store,
                seed=seed, sample_id=row.sample_id,
            )
        )
    mean_correct = aggregate_scores([r.score for r in correct])
    mean_incorrect = aggregate_scores([r.score for r in incorrect])
    return GapReport(
        mean_correct=mean_correct,
        mean_incorrect=mean_incorrect,
        gap=mean_correct - mean_incorrect,
        n_correct=len(correct),
        n_incorrect=len(incorrect),
        pairing_seed=pairing_seed,
        correct_records=tuple(correct),
        incorrect_records=tuple(incorrect),
    )
