"""Registry mapping logical backend names to descriptors, and the factory
that turns a descriptor into a runnable handle.

Stub backends are instantiated from the descriptor alone. Any descriptor
whose params carry a ``base_url`` becomes a remote handle regardless of
its model name, which is how the reference GPU stack (InstructBLIP
captioner, SD3-medium generator, DINOv2 encoder) is wired in without this
package shipping any model code.
"""

from __future__ import annotations

import difflib
import json
import sys
from pathlib import Path
from typing import Any, Mapping

from ..errors import ConfigurationError
from ..types import BackendDescriptor, BackendKind
from . import remote, stubs
from .base import Captioner, Encoder, Generator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def reference_descriptors() -> dict[str, BackendDescriptor]:
    """The full-scale reference stack, expressed as configuration data.

    These cannot run without a remote provider (add ``base_url``); they
    exist so reports and cache keys can name the exact intended models.
    """
    return {
        "instructblip-vicuna7b": BackendDescriptor(
            kind=BackendKind.CAPTIONER,
            name="instructblip-vicuna7b",
            version="1.0",
            params={
                "prompt_template": "<Image> A short image caption:",
                "token_limit": 100,
            },
        ),
        "sd3-medium": BackendDescriptor(
            kind=BackendKind.GENERATOR,
            name="sd3-medium",
            version="3.0",
            params={
                "steps": 28,
                "guidance": 7.0,
                "width": 1024,
                "height": 1024,
                "num_seeds": 1,
            },
        ),
        "dinov2-vitb14": BackendDescriptor(
            kind=BackendKind.ENCODER,
            name="dinov2-vitb14",
            version="1.0",
            params={"pooling": "class_token", "dim": 768},
        ),
    }


def builtin_descriptors() -> dict[str, BackendDescriptor]:
    defaults = {
        "stub-hash": stubs.HashCaptioner().descriptor,
        "stub-noise": stubs.NoiseGenerator().descriptor,
        "stub-pixel": stubs.PixelEncoder().descriptor,
        "stub-histogram": stubs.HistogramEncoder().descriptor,
    }
    defaults.update(reference_descriptors())
    return defaults


class BackendRegistry:
    def __init__(self, entries: Mapping[str, BackendDescriptor] | None = None):
        self._entries: dict[str, BackendDescriptor] = builtin_descriptors()
        if entries:
            self._entries.update(entries)

    def names(self) -> list[str]:
        return sorted(self._entries)

    def register(self, logical_name: str, descriptor: BackendDescriptor) -> None:
        self._entries[logical_name] = descriptor

    def resolve(self, logical_name: str) -> BackendDescriptor:
        try:
            return self._entries[logical_name]
        except KeyError:
            hint = ""
            close = difflib.get_close_matches(logical_name, self._entries, n=3)
            if close:
                hint = f"; did you mean {', '.join(close)}?"
            raise ConfigurationError(
                f"unknown backend {logical_name!r}{hint} "
                f"(registered: {', '.join(self.names())})"
            ) from None

    @classmethod
    def from_file(cls, path: str | Path) -> "BackendRegistry":
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"registry file not found: {path}")
        if path.suffix == ".toml":
            with path.open("rb") as fh:
                data = tomllib.load(fh)
        elif path.suffix == ".json":
            data = json.loads(path.read_text(encoding="utf-8"))
        else:
            raise ConfigurationError(
                f"registry file must be .toml or .json, got {path.suffix!r}"
            )
        return cls.from_mapping(data, source=str(path))

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], source: str = "<config>") -> "BackendRegistry":
        backends = data.get("backends", {})
        if not isinstance(backends, Mapping):
            raise ConfigurationError(f"{source}: 'backends' must be a table/object")
        entries = {}
        for logical, obj in backends.items():
            if not isinstance(obj, Mapping):
                raise ConfigurationError(f"{source}: backend {logical!r} must be an object")
            entries[logical] = BackendDescriptor.from_dict(obj)
        return cls(entries)


def build_captioner(descriptor: BackendDescriptor) -> Captioner:
    _expect_kind(descriptor, BackendKind.CAPTIONER)
    p = descriptor.params
    if "base_url" in p:
        return remote.RemoteCaptioner(descriptor, remote.client_from_params(p))
    if descriptor.name == "stub-lookup":
        return stubs.LookupCaptioner(
            table=_require(descriptor, "table"),
            token_limit=int(p.get("token_limit", 100)),
        )
    if descriptor.name == "stub-hash":
        return stubs.HashCaptioner(token_limit=int(p.get("token_limit", 100)))
    if descriptor.name == "stub-constant":
        return stubs.ConstantCaptioner(
            text=_require(descriptor, "text"),
            token_limit=int(p.get("token_limit", 100)),
        )
    raise ConfigurationError(
        f"captioner {descriptor.name!r} has no local implementation and no base_url"
    )


def build_generator(descriptor: BackendDescriptor) -> Generator:
    _expect_kind(descriptor, BackendKind.GENERATOR)
    p = descriptor.params
    if "base_url" in p:
        return remote.RemoteGenerator(descriptor, remote.client_from_params(p))
    if descriptor.name == "stub-noise":
        return stubs.NoiseGenerator(
            width=int(p.get("width", 64)), height=int(p.get("height", 64))
        )
    if descriptor.name == "stub-oracle":
        mapping = p.get("mapping_paths")
        if mapping is None:
            raise ConfigurationError(
                "stub-oracle needs a 'mapping_paths' param ({caption text: image path})"
            )
        return stubs.OracleGenerator.from_paths(
            mapping, width=int(p.get("width", 64)), height=int(p.get("height", 64))
        )
    raise ConfigurationError(
        f"generator {descriptor.name!r} has no local implementation and no base_url"
    )


def build_encoder(descriptor: BackendDescriptor) -> Encoder:
    _expect_kind(descriptor, BackendKind.ENCODER)
    p = descriptor.params
    if "base_url" in p:
        return remote.RemoteEncoder(descriptor, remote.client_from_params(p))
    if descriptor.name == "stub-pixel":
        return stubs.PixelEncoder(side=int(p.get("side", 16)))
    if descriptor.name == "stub-histogram":
        return stubs.HistogramEncoder(bins=int(p.get("bins", 32)))
    raise ConfigurationError(
        f"encoder {descriptor.name!r} has no local implementation and no base_url"
    )


def _expect_kind(descriptor: BackendDescriptor, kind: BackendKind) -> None:
    if descriptor.kind is not kind:
        raise ConfigurationError(
            f"{descriptor.name!r} is a {descriptor.kind.value}, expected {kind.value}"
        )


def _require(descriptor: BackendDescriptor, key: str):
    try:
        return descriptor.params[key]
    except KeyError:
        raise ConfigurationError(
            f"backend {descriptor.name!r} needs a {key!r} param"
        ) from None
