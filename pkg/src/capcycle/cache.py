"""Content-addressed store for inference artifacts.

Layout on disk:

    <root>/<stage>/<first 2 hex>/<digest>.<png|json>   payload
    <root>/<stage>/<first 2 hex>/<digest>.meta.json    sidecar metadata

A key digest covers the canonical descriptor string, the stage input
identity and the seed, so any parameter change produces a new key.
Entries are write-once: a second writer of an existing key verifies
payload equality instead of overwriting (backends that declared
``deterministic: false`` get their first answer kept silently). Reads
re-hash the payload and fail loudly on mismatch.
"""

from __future__ import annotations

import enum
import hashlib
import json
import os
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterator

from .errors import CacheIntegrityError, ContractError
from .types import BackendDescriptor

_DIGEST_HEX = 64


class Stage(str, enum.Enum):
    CAPTION = "caption"
    GENERATION = "generation"
    EMBEDDING = "embedding"


@dataclass(frozen=True)
class CacheKey:
    stage: Stage
    digest: str

    def __post_init__(self) -> None:
        if not isinstance(self.stage, Stage):
            object.__setattr__(self, "stage", Stage(self.stage))
        if len(self.digest) != _DIGEST_HEX:
            raise ContractError("cache key digest must be a sha256 hex string")


def make_key(
    stage: Stage | str,
    descriptor: BackendDescriptor,
    input_id: str,
    seed: int = 0,
) -> CacheKey:
    material = "\n".join([descriptor.canonical(), input_id, str(seed)])
    return CacheKey(
        stage=Stage(stage),
        digest=hashlib.sha256(material.encode("utf-8")).hexdigest(),
    )


@dataclass(frozen=True)
class CacheEntry:
    key: CacheKey
    payload_path: Path
    meta_path: Path
    meta: dict[str, Any]

    @property
    def size_bytes(self) -> int:
        size = 0
        for p in (self.payload_path, self.meta_path):
            try:
                size += p.stat().st_size
            except OSError:
                pass
        return size


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


class CacheStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._meta_lock = threading.Lock()

    # -- paths ---------------------------------------------------------

    def _dir(self, key: CacheKey) -> Path:
        return self.root / key.stage.value / key.digest[:2]

    def _payload_path(self, key: CacheKey, ext: str) -> Path:
        return self._dir(key) / f"{key.digest}.{ext}"

    def _meta_path(self, key: CacheKey) -> Path:
        return self._dir(key) / f"{key.digest}.meta.json"

    def _find_payload(self, key: CacheKey) -> Path | None:
        for ext in ("png", "json"):
            p = self._payload_path(key, ext)
            if p.exists():
                return p
        return None

    # -- core operations -------------------------------------------------

    def has(self, key: CacheKey) -> bool:
        return self._meta_path(key).exists() and self._find_payload(key) is not None

    def put(
        self,
        key: CacheKey,
        payload: bytes,
        ext: str,
        meta: dict[str, Any],
        deterministic: bool = True,
    ) -> tuple[Path, dict[str, Any]]:
        if ext not in ("png", "json"):
            raise ContractError(f"payload ext must be png or json, got {ext!r}")
        payload_sha = hashlib.sha256(payload).hexdigest()
        existing = self._find_payload(key)
        if existing is not None:
            stored_sha = hashlib.sha256(existing.read_bytes()).hexdigest()
            if stored_sha != payload_sha and deterministic:
                raise CacheIntegrityError(
                    f"key {key.digest[:12]}... already stores different bytes; "
                    "a deterministic backend produced conflicting output"
                )
            # either identical bytes, or a nondeterministic backend whose
            # first answer wins
            return existing, self._read_meta(self._meta_path(key), key.digest)
        now = time.time()
        full_meta = {
            "stage": key.stage.value,
            "digest": key.digest,
            "ext": ext,
            "payload_sha256": payload_sha,
            "created_at": now,
            "last_used": now,
            **meta,
        }
        path = self._payload_path(key, ext)
        _atomic_write(path, payload)
        _atomic_write(
            self._meta_path(key),
            json.dumps(full_meta, sort_keys=True).encode("utf-8"),
        )
        return path, full_meta

    def get(self, key: CacheKey) -> tuple[bytes, dict[str, Any]] | None:
        meta_path = self._meta_path(key)
        payload_path = self._find_payload(key)
        if payload_path is None or not meta_path.exists():
            return None
        meta = self._read_meta(meta_path, key.digest)
        payload = payload_path.read_bytes()
        got = hashlib.sha256(payload).hexdigest()
        if got != meta.get("payload_sha256"):
            raise CacheIntegrityError(
                f"cache entry {key.digest[:12]}... is corrupt: payload hash mismatch"
            )
        self._touch(meta_path, meta)
        return payload, meta

    def payload_path(self, key: CacheKey) -> Path | None:
        return self._find_payload(key)

    def _read_meta(self, meta_path: Path, digest: str) -> dict[str, Any]:
        try:
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise CacheIntegrityError(f"unreadable sidecar for {digest[:12]}...: {exc}") from exc
        if meta.get("digest") != digest:
            raise CacheIntegrityError(
                f"sidecar for {digest[:12]}... names digest {str(meta.get('digest'))[:12]}..."
            )
        return meta

    def _touch(self, meta_path: Path, meta: dict[str, Any]) -> None:
        meta = dict(meta)
        meta["last_used"] = time.time()
        with self._meta_lock:
            _atomic_write(meta_path, json.dumps(meta, sort_keys=True).encode("utf-8"))

    # -- maintenance ------------------------------------------------------

    def entries(self) -> Iterator[CacheEntry]:
        for stage in Stage:
            stage_dir = self.root / stage.value
            if not stage_dir.is_dir():
                continue
            for meta_path in sorted(stage_dir.glob("*/*.meta.json")):
                digest = meta_path.name.removesuffix(".meta.json")
                meta = self._read_meta(meta_path, digest)
                payload = meta_path.with_name(f"{digest}.{meta.get('ext', 'json')}")
                yield CacheEntry(
                    key=CacheKey(stage=stage, digest=digest),
                    payload_path=payload,
                    meta_path=meta_path,
                    meta=meta,
                )

    def verify(self) -> tuple[int, list[tuple[str, str]]]:
        """Re-hash every entry; returns (entries checked, (digest, problem) pairs)."""
        problems: list[tuple[str, str]] = []
        checked = 0
        for stage in Stage:
            stage_dir = self.root / stage.value
            if not stage_dir.is_dir():
                continue
            for meta_path in sorted(stage_dir.glob("*/*.meta.json")):
                checked += 1
                digest = meta_path.name.removesuffix(".meta.json")
                try:
                    meta = self._read_meta(meta_path, digest)
                except CacheIntegrityError as exc:
                    problems.append((digest, str(exc)))
                    continue
                payload = meta_path.with_name(f"{digest}.{meta.get('ext', 'json')}")
                if not payload.exists():
                    problems.append((digest, "payload file missing"))
                    continue
                got = hashlib.sha256(payload.read_bytes()).hexdigest()
                if got != meta.get("payload_sha256"):
                    problems.append((digest, "payload hash mismatch"))
        return checked, problems

    def total_bytes(self) -> int:
        return sum(e.size_bytes for e in self.entries())

    def gc(
        self,
        max_bytes: int,
        is_pinned: Callable[[CacheEntry], bool] | None = None,
    ) -> dict[str, int]:
        """Evict least-recently-used entries until the store fits the budget.

        Pinned entries are never evicted, even at max_bytes=0.
        """
        entries = list(self.entries())
        total = sum(e.size_bytes for e in entries)
        evicted = 0
        freed = 0
        if total > max_bytes:
            candidates = [e for e in entries if not (is_pinned and is_pinned(e))]
            candidates.sort(key=lambda e: (e.meta.get("last_used", 0.0), e.key.digest))
            for entry in candidates:
                if total <= max_bytes:
                    break
                size = entry.size_bytes
                for p in (entry.payload_path, entry.meta_path):
                    try:
                        p.unlink()
                    except OSError:
                        pass
                total -= size
                freed += size
                evicted += 1
        return {"evicted": evicted, "freed_bytes": freed, "remaining_bytes": total}
