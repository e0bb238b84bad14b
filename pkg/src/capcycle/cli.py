"""Command-line front end; the only process entry point.

Every command prints exactly one JSON document on stdout; diagnostics go
to stderr. Exit codes: 0 success, 2 configuration error, 3 backend
error, 4 cache-integrity error, 5 completed with skipped rows.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

from filelock import FileLock

from . import baselines, datasets, images, protocols, records as records_io
from .backends import registry as registry_mod
from .backends.base import Captioner, Encoder, Generator
from .backends.registry import BackendRegistry
from .cache import CacheStore
from .errors import (
    BackendFaultError,
    CacheIntegrityError,
    CapcycleError,
    ConfigurationError,
    ContentPolicyError,
    ContractError,
    DegenerateInputError,
    IngestionError,
    StageError,
    TransportError,
)
from .manifest import EvaluationManifest, read_manifest
from .pipeline import RunConfig, run_manifest, score_caption
from .types import Caption

logger = logging.getLogger("capcycle")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_CACHE = 4
EXIT_SKIPS = 5


@dataclass
class CliConfig:
    registry: BackendRegistry = field(default_factory=BackendRegistry)
    cache_dir: Path = Path("cache")
    defaults: dict[str, Any] = field(default_factory=dict)
    dataset_roots: dict[str, str] = field(default_factory=dict)


def load_config(path: str | None) -> CliConfig:
    if path is None:
        return CliConfig()
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"config file not found: {p}")
    if p.suffix == ".toml":
        if sys.version_info >= (3, 11):
            import tomllib
        else:
            import tomli as tomllib
        with p.open("rb") as fh:
            data = tomllib.load(fh)
    elif p.suffix == ".json":
        data = json.loads(p.read_text(encoding="utf-8"))
    else:
        raise ConfigurationError(f"config file must be .toml or .json, got {p.suffix!r}")
    return CliConfig(
        registry=BackendRegistry.from_mapping(data, source=str(p)),
        cache_dir=Path(data.get("cache_dir", "cache")),
        defaults=dict(data.get("defaults", {})),
        dataset_roots=dict(data.get("datasets", {})),
    )


def _emit(doc: dict, out: str | None = None) -> None:
    text = json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n", encoding="utf-8")
    print(text)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _lock(cache_dir: Path) -> FileLock:
    cache_dir.mkdir(parents=True, exist_ok=True)
    return FileLock(str(cache_dir / ".capcycle.lock"))


def _resolve_backends(
    cfg: CliConfig, args: argparse.Namespace, need_captioner: bool = False
) -> tuple[Generator, Encoder, Captioner | None]:
    gen_name = getattr(args, "generator", None) or cfg.defaults.get("generator")
    enc_name = getattr(args, "encoder", None) or cfg.defaults.get("encoder")
    if not gen_name or not enc_name:
        raise ConfigurationError(
            "generator and encoder must be named via flags or config defaults"
        )
    generator = registry_mod.build_generator(cfg.registry.resolve(gen_name))
    encoder = registry_mod.build_encoder(cfg.registry.resolve(enc_name))
    captioner = None
    cap_name = getattr(args, "captioner", None) or cfg.defaults.get("captioner")
    if cap_name:
        captioner = registry_mod.build_captioner(cfg.registry.resolve(cap_name))
    elif need_captioner:
        raise ConfigurationError("this command needs a captioner (flag or config default)")
    return generator, encoder, captioner


def _report_envelope(
    protocol: str,
    statistic: float,
    n: int,
    recs: Sequence,
    extra: dict[str, Any],
) -> dict[str, Any]:
    doc = {
        "protocol": protocol,
        "statistic": statistic,
        "n": n,
        "config_digest": records_io.config_digest(recs),
        "backends": records_io.require_uniform_backends(recs, allow_mixed=True),
        "baselines": baselines.BASELINES_BY_PROTOCOL.get(protocol, []),
        "full_scale_target": baselines.FULL_SCALE_TARGETS.get(
            {
                "flickr8k_expert": "flickr8k_expert_tau_c",
                "flickr8k_cf": "flickr8k_cf_tau_b",
                "foil_pairwise": "foil_accuracy",
                "mhaldetect_pairwise": "mhaldetect_accuracy",
            }.get(protocol, protocol)
        ),
        "timestamp": _now(),
    }
    doc.update(extra)
    return doc


# -- commands -------------------------------------------------------------


def cmd_score(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if args.cache_dir:
        cfg.cache_dir = Path(args.cache_dir)
    generator, encoder, _ = _resolve_backends(cfg, args)
    image = images.ref_from_file(args.image)
    caption = Caption(text=args.caption)
    store = CacheStore(cfg.cache_dir)
    with _lock(cfg.cache_dir):
        record = score_caption(
            image, caption, generator, encoder, store,
            seed=args.seed, sample_id=args.sample_id,
        )
    _emit(records_io.record_to_dict(record), args.out)
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if args.cache_dir:
        cfg.cache_dir = Path(args.cache_dir)
    generator, encoder, captioner = _resolve_backends(cfg, args)
    manifest = read_manifest(args.manifest)
    manifest.require_valid(check_images=True)
    store = CacheStore(cfg.cache_dir)
    run_cfg = RunConfig(
        generator=generator,
        encoder=encoder,
        captioner=captioner,
        store=store,
        seed=args.seed,
        fail_fast=args.fail_fast,
        workers=args.workers or int(cfg.defaults.get("workers", 1)),
    )
    with _lock(cfg.cache_dir):
        result = run_manifest(manifest, run_cfg)
    if args.out:
        records_io.write_records(result.records, args.out)
    summary = result.summary()
    summary["failed_rows"] = [f.to_dict() for f in result.failures]
    summary["records_path"] = args.out
    _emit(summary)
    return EXIT_SKIPS if result.failures else EXIT_OK


def cmd_correlate(args: argparse.Namespace) -> int:
    recs = records_io.read_records(args.records)
    records_io.require_uniform_backends(recs, allow_mixed=args.allow_mixed)
    manifest = read_manifest(args.dataset)
    judgments = manifest.judgments()
    if args.protocol == "expert":
        report = protocols.flickr8k_expert_protocol(
            recs, judgments, strict=not args.lenient
        )
        name = "flickr8k_expert"
    else:
        report = protocols.flickr8k_cf_protocol(recs, judgments)
        name = "flickr8k_cf"
    _emit(
        _report_envelope(
            name, report.tau, report.n, recs, {"correlation": report.to_dict()}
        ),
        args.out,
    )
    return EXIT_OK


def _split_by_source(recs, positive: str, negative: str):
    pos = [r for r in recs if r.caption.source.value == positive]
    neg = [r for r in recs if r.caption.source.value == negative]
    return pos, neg


def cmd_foil(args: argparse.Namespace) -> int:
    recs = records_io.read_records(args.records)
    records_io.require_uniform_backends(recs, allow_mixed=args.allow_mixed)
    true_recs, foil_recs = _split_by_source(recs, "human_reference", "foil")
    report = protocols.foil_pairwise_protocol(
        true_recs, foil_recs, tie_policy=args.tie_policy
    )
    _emit(
        _report_envelope(
            report.protocol, report.accuracy, report.n, recs,
            {"pairwise": report.to_dict()},
        ),
        args.out,
    )
    return EXIT_OK


def cmd_haldetect(args: argparse.Namespace) -> int:
    recs = records_io.read_records(args.records)
    records_io.require_uniform_backends(recs, allow_mixed=args.allow_mixed)
    gt_recs, hall_recs = _split_by_source(recs, "human_reference", "hallucinated")
    report = protocols.mhaldetect_pairwise_protocol(
        gt_recs, hall_recs, tie_policy=args.tie_policy
    )
    _emit(
        _report_envelope(
            report.protocol, report.accuracy, report.n, recs,
            {"pairwise": report.to_dict()},
        ),
        args.out,
    )
    return EXIT_OK


def cmd_gap(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if args.cache_dir:
        cfg.cache_dir = Path(args.cache_dir)
    generator, encoder, _ = _resolve_backends(cfg, args)
    manifest = read_manifest(args.manifest)
    manifest.require_valid(check_images=True)
    store = CacheStore(cfg.cache_dir)
    with _lock(cfg.cache_dir):
        report = protocols.likert_gap_experiment(
            manifest, generator, encoder, store,
            pairing_seed=args.pairing_seed, seed=args.seed,
        )
    if args.histogram:
        hist_path = Path(args.histogram)
        hist_path.parent.mkdir(parents=True, exist_ok=True)
        with hist_path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["kind", "sample_id", "score"])
            for r in report.correct_records:
                writer.writerow(["correct", r.sample_id, repr(r.score)])
            for r in report.incorrect_records:
                writer.writerow(["incorrect", r.sample_id, repr(r.score)])
    all_recs = list(report.correct_records) + list(report.incorrect_records)
    _emit(
        _report_envelope(
            "likert_gap", report.gap, report.n_correct + report.n_incorrect,
            all_recs,
            {
                "gap": report.to_dict(),
                "full_scale_target": {
                    "mean_correct": baselines.FULL_SCALE_TARGETS["gap_mean_correct"],
                    "mean_incorrect": baselines.FULL_SCALE_TARGETS["gap_mean_incorrect"],
                    "gap": baselines.FULL_SCALE_TARGETS["gap"],
                },
            },
        ),
        args.out,
    )
    return EXIT_OK


def cmd_cache(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if args.cache_dir:
        cfg.cache_dir = Path(args.cache_dir)
    store = CacheStore(cfg.cache_dir)
    if args.action == "list":
        entries = list(store.entries())
        by_stage: dict[str, int] = {}
        for e in entries:
            by_stage[e.key.stage.value] = by_stage.get(e.key.stage.value, 0) + 1
        _emit(
            {
                "action": "list",
                "entries": len(entries),
                "by_stage": by_stage,
                "total_bytes": sum(e.size_bytes for e in entries),
            }
        )
        return EXIT_OK
    if args.action == "verify":
        checked, problems = store.verify()
        _emit(
            {
                "action": "verify",
                "checked": checked,
                "problems": [{"digest": d, "reason": r} for d, r in problems],
            }
        )
        return EXIT_CACHE if problems else EXIT_OK
    # gc
    if args.max_bytes is None:
        raise ConfigurationError("cache gc needs --max-bytes")
    pinned_hashes: set[str] = set()
    pinned_captions: set[str] = set()
    for pin_path in args.pin or []:
        manifest = read_manifest(pin_path)
        for row in manifest.rows:
            try:
                pinned_hashes.add(images.ref_from_file(row.image).content_hash)
            except Exception as exc:
                logger.warning("pin manifest image %s unreadable: %s", row.image, exc)
            for caption in row.captions:
                pinned_captions.add(_caption_sha(caption.text))

    def is_pinned(entry) -> bool:
        meta = entry.meta
        return (
            meta.get("source_image_hash") in pinned_hashes
            or meta.get("caption_sha256") in pinned_captions
            or meta.get("parent_caption_sha256") in pinned_captions
        )

    with _lock(cfg.cache_dir):
        stats = store.gc(args.max_bytes, is_pinned if (args.pin) else None)
    _emit({"action": "gc", **stats})
    return EXIT_OK


def _caption_sha(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def cmd_ingest(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    root = args.path or cfg.dataset_roots.get(args.dataset)
    if args.dataset == "flickr8k-expert":
        manifest = datasets.load_flickr8k_expert(
            _need_root(root, args.dataset),
            expected_pairs=None if args.allow_any_count else datasets.FLICKR8K_EXPERT_PAIRS,
        )
    elif args.dataset == "flickr8k-cf":
        manifest = datasets.load_flickr8k_cf(_need_root(root, args.dataset))
    elif args.dataset == "foil":
        manifest = datasets.load_foil(_need_root(root, args.dataset), images_root=args.images_root)
    elif args.dataset == "mhaldetect":
        manifest = datasets.load_mhaldetect(
            _need_root(root, args.dataset), images_root=args.images_root
        )
    else:  # proposed
        if not args.mscoco or not args.flickr30k:
            raise ConfigurationError("proposed dataset needs --mscoco and --flickr30k")
        manifest = datasets.build_proposed_dataset(
            args.mscoco,
            args.flickr30k,
            flickr30k_pairs=args.flickr30k_pairs,
            strict=args.strict,
        )
    issues = manifest.validate(check_images=not args.skip_image_check)
    from .manifest import write_manifest

    write_manifest(manifest, args.out)
    _emit(
        {
            "dataset_id": manifest.dataset_id,
            "rows": len(manifest.rows),
            "out": args.out,
            "validation_issues": [i.to_dict() for i in issues],
        }
    )
    return EXIT_CONFIG if issues and args.strict else EXIT_OK


def _need_root(root: str | None, name: str) -> str:
    if not root:
        raise ConfigurationError(f"dataset {name!r} needs --path or a config datasets entry")
    return root


# -- argument parsing -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="capcycle",
        description=(
            "Score image captions by regenerating images from them and "
            "comparing embeddings against the originals"
        ),
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log INFO to stderr")
    sub = parser.add_subparsers(dest="cmd", required=True)

    def common(p, cache=True):
        p.add_argument("--config", default=None, help="TOML/JSON config file")
        if cache:
            p.add_argument("--cache-dir", default=None, help="cache directory override")

    p = sub.add_parser("score", help="score one caption against one image")
    common(p)
    p.add_argument("--image", required=True)
    p.add_argument("--caption", required=True)
    p.add_argument("--generator", default=None, help="registry name")
    p.add_argument("--encoder", default=None, help="registry name")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-id", default="cli")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("evaluate", help="score every row of a manifest")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=None, help="records JSONL path")
    p.add_argument("--generator", default=None)
    p.add_argument("--encoder", default=None)
    p.add_argument("--captioner", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--fail-fast", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("correlate", help="rank-correlate scores with human judgments")
    p.add_argument("--records", required=True)
    p.add_argument("--dataset", required=True, help="manifest JSONL with judgments")
    p.add_argument("--protocol", choices=["expert", "cf"], required=True)
    p.add_argument("--lenient", action="store_true")
    p.add_argument("--allow-mixed", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("foil", help="true-vs-foil pairwise accuracy")
    p.add_argument("--records", required=True)
    p.add_argument("--tie-policy", choices=["strict", "half"], default="strict")
    p.add_argument("--allow-mixed", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_foil)

    p = sub.add_parser("haldetect", help="ground-truth vs hallucinated-sentence accuracy")
    p.add_argument("--records", required=True)
    p.add_argument("--tie-policy", choices=["strict", "half"], default="strict")
    p.add_argument("--allow-mixed", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_haldetect)

    p = sub.add_parser("gap", help="correct-vs-mismatched caption score gap")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--generator", default=None)
    p.add_argument("--encoder", default=None)
    p.add_argument("--pairing-seed", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--histogram", default=None, help="write per-pair scores CSV here")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_gap)

    p = sub.add_parser("cache", help="inspect, verify, or shrink the cache")
    common(p)
    p.add_argument("action", choices=["list", "verify", "gc"])
    p.add_argument("--max-bytes", type=int, default=None)
    p.add_argument("--pin", action="append", default=None,
                   help="manifest whose artifacts gc must keep (repeatable)")
    p.set_defaults(func=cmd_cache)

    p = sub.add_parser("ingest", help="convert a dataset release into a manifest")
    common(p, cache=False)
    p.add_argument(
        "--dataset",
        choices=["flickr8k-expert", "flickr8k-cf", "foil", "mhaldetect", "proposed"],
        required=True,
    )
    p.add_argument("--path", default=None, help="dataset root or source file")
    p.add_argument("--images-root", default=None)
    p.add_argument("--mscoco", default=None)
    p.add_argument("--flickr30k", default=None)
    p.add_argument("--flickr30k-pairs", type=int, default=datasets.FLICKR30K_MERGE_PAIRS)
    p.add_argument("--allow-any-count", action="store_true")
    p.add_argument("--strict", action="store_true")
    p.add_argument("--skip-image-check", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    return parser


def _exit_code_for(exc: CapcycleError) -> int:
    cause = exc.cause if isinstance(exc, StageError) else exc
    if isinstance(cause, CacheIntegrityError):
        return EXIT_CACHE
    if isinstance(cause, (TransportError, BackendFaultError, ContentPolicyError)):
        return EXIT_BACKEND
    if isinstance(cause, (ConfigurationError, IngestionError, ContractError, DegenerateInputError)):
        return EXIT_CONFIG
    return EXIT_CONFIG


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except CapcycleError as exc:
        code = _exit_code_for(exc)
        print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
