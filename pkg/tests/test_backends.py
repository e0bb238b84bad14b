from __future__ import annotations

import re

import numpy as np
import pytest

from capcycle import images
from capcycle.backends import base, stubs
from capcycle.backends.registry import (
    BackendRegistry,
    build_captioner,
    build_encoder,
    build_generator,
)
from capcycle.errors import BackendFaultError, ConfigurationError, ContractError
from capcycle.similarity import cosine_similarity
from capcycle.types import BackendDescriptor, Caption, CaptionSource
from conftest import make_image, synthetic_pixels

# independent token counter for the truncation oracle
_WORDS = re.compile(r"\S+")


class TestTokenHandling:
    def test_truncation_respects_limit(self):
        text = " ".join(f"w{i}" for i in range(150))
        out = base.truncate_to_token_limit(text, 100)
        assert len(_WORDS.findall(out)) == 100
        # cut lands on a word boundary: result is a prefix of the token list
        assert _WORDS.findall(out) == _WORDS.findall(text)[:100]

    def test_short_text_untouched(self):
        assert base.truncate_to_token_limit("a red bicycle", 100) == "a red bicycle"

    def test_special_tokens_stripped(self):
        raw = "<s> a dog on a <pad> beach </s>"
        assert base.strip_special_tokens(raw).split() == ["a", "dog", "on", "a", "beach"]

    def test_captioner_applies_limit(self, image_dir):
        ref = make_image(image_dir, "limit")
        long_text = " ".join(f"tok{i}" for i in range(200))
        cap = stubs.LookupCaptioner({ref.content_hash: long_text}, token_limit=100)
        out = cap.caption(ref)
        assert len(_WORDS.findall(out.text)) == 100
        assert out.token_limit == 100
        assert out.source is CaptionSource.MODEL_GENERATED

    def test_prompt_template_needs_one_placeholder(self, image_dir):
        ref = make_image(image_dir, "tmpl")
        cap = stubs.HashCaptioner()
        with pytest.raises(ContractError):
            cap.caption(ref, prompt_template="no placeholder here")
        with pytest.raises(ContractError):
            cap.caption(ref, prompt_template="<Image> twice <Image>")


class TestCaptionerStubs:
    def test_lookup_hit(self, image_dir):
        ref = make_image(image_dir, "bike")
        cap = stubs.LookupCaptioner({ref.content_hash: "a red bicycle"})
        assert cap.caption(ref).text == "a red bicycle"

    def test_lookup_miss_is_backend_fault(self, image_dir):
        ref = make_image(image_dir, "unknown")
        cap = stubs.LookupCaptioner({})
        with pytest.raises(BackendFaultError):
            cap.caption(ref)

    def test_hash_captioner_deterministic_and_distinct(self, image_dir):
        r1 = make_image(image_dir, "h1")
        r2 = make_image(image_dir, "h2")
        cap = stubs.HashCaptioner()
        assert cap.caption(r1).text == cap.caption(r1).text
        assert cap.caption(r1).text != cap.caption(r2).text

    def test_constant_captioner(self, image_dir):
        ref = make_image(image_dir, "const")
        cap = stubs.ConstantCaptioner("an image")
        assert cap.caption(ref).text == "an image"

    def test_empty_output_is_backend_fault(self, image_dir):
        ref = make_image(image_dir, "empty")
        cap = stubs.LookupCaptioner({ref.content_hash: "<s></s>"})
        with pytest.raises(BackendFaultError):
            cap.caption(ref)


class TestGeneratorStubs:
    def test_noise_determinism(self):
        gen = stubs.NoiseGenerator()
        c = Caption(text="a dog")
        a = gen.generate(c, seed=7)
        b = gen.generate(c, seed=7)
        assert images.pixel_hash(a) == images.pixel_hash(b)

    def test_noise_seed_sensitivity_no_collisions(self):
        gen = stubs.NoiseGenerator(width=16, height=16)
        c = Caption(text="a dog")
        hashes = {images.pixel_hash(gen.generate(c, seed=s)) for s in range(1000)}
        assert len(hashes) == 1000

    def test_noise_text_sensitivity(self):
        gen = stubs.NoiseGenerator()
        a = gen.generate(Caption(text="a dog"), seed=0)
        b = gen.generate(Caption(text="a cat"), seed=0)
        assert images.pixel_hash(a) != images.pixel_hash(b)

    def test_oracle_returns_original(self, image_dir):
        ref = make_image(image_dir, "oracle")
        pixels = images.decode_rgb(ref.uri)
        gen = stubs.OracleGenerator({"the right caption": pixels})
        out = gen.generate(Caption(text="the right caption"), seed=0)
        assert images.pixel_hash(out) == ref.content_hash

    def test_oracle_unknown_text_falls_back_to_noise(self, image_dir):
        ref = make_image(image_dir, "oracle2")
        gen = stubs.OracleGenerator({"known": images.decode_rgb(ref.uri)})
        out = gen.generate(Caption(text="unknown"), seed=0)
        assert images.pixel_hash(out) != ref.content_hash
        again = gen.generate(Caption(text="unknown"), seed=0)
        assert images.pixel_hash(out) == images.pixel_hash(again)


class TestEncoderStubs:
    def test_pixel_encoder_dim(self, image_dir):
        ref = make_image(image_dir, "enc")
        vec = stubs.PixelEncoder().embed(ref)
        assert vec.dim == 768

    def test_pixel_encoder_format_invariant(self, tmp_path):
        from PIL import Image

        pixels = synthetic_pixels("enc-format")
        png, bmp = tmp_path / "x.png", tmp_path / "x.bmp"
        Image.fromarray(pixels, "RGB").save(png)
        Image.fromarray(pixels, "RGB").save(bmp)
        enc = stubs.PixelEncoder()
        v1 = enc.embed(images.ref_from_file(png))
        v2 = enc.embed(images.ref_from_file(bmp))
        assert np.array_equal(v1.values, v2.values)

    def test_pixel_encoder_self_similarity(self, image_dir):
        ref = make_image(image_dir, "self")
        enc = stubs.PixelEncoder()
        assert cosine_similarity(enc.embed(ref), enc.embed(ref)) == 1.0

    def test_pixel_encoder_rejects_constant_image(self, image_dir):
        path = image_dir / "flat.png"
        images.save_png(np.full((32, 32, 3), 128, dtype=np.uint8), path)
        enc = stubs.PixelEncoder()
        with pytest.raises(BackendFaultError):
            enc.embed(images.ref_from_file(path))

    def test_histogram_encoder_handles_constant_image(self, image_dir):
        path = image_dir / "flat2.png"
        images.save_png(np.full((32, 32, 3), 128, dtype=np.uint8), path)
        vec = stubs.HistogramEncoder().embed(images.ref_from_file(path))
        assert vec.dim == 96


class TestStubDeterminismProperty:
    def test_all_stub_outputs_pure_functions_of_inputs(self, image_dir):
        ref = make_image(image_dir, "purity")
        caption = Caption(text="a boat on a river")
        captioners = [
            stubs.LookupCaptioner({ref.content_hash: "a boat"}),
            stubs.HashCaptioner(),
            stubs.ConstantCaptioner("an image"),
        ]
        for c in captioners:
            fresh = type(c)(*_ctor_args(c))
            assert c.caption(ref).text == fresh.caption(ref).text
        generators = [stubs.NoiseGenerator(), stubs.OracleGenerator({})]
        for g in generators:
            assert images.pixel_hash(g.generate(caption, 3)) == images.pixel_hash(
                g.generate(caption, 3)
            )
        encoders = [stubs.PixelEncoder(), stubs.HistogramEncoder()]
        for e in encoders:
            assert np.array_equal(e.embed(ref).values, e.embed(ref).values)


def _ctor_args(captioner):
    if isinstance(captioner, stubs.LookupCaptioner):
        return (captioner.table,)
    if isinstance(captioner, stubs.ConstantCaptioner):
        return (captioner.text,)
    return ()


class TestRegistry:
    def test_builtin_names_resolve(self):
        reg = BackendRegistry()
        assert reg.resolve("stub-noise").kind.value == "generator"
        assert reg.resolve("stub-pixel").kind.value == "encoder"

    def test_unknown_name_suggests(self):
        reg = BackendRegistry()
        with pytest.raises(ConfigurationError, match="did you mean"):
            reg.resolve("stub-noize")

    def test_toml_round_trip(self, tmp_path):
        cfg = tmp_path / "registry.toml"
        cfg.write_text(
            "\n".join(
                [
                    "[backends.mygen]",
                    'kind = "generator"',
                    'name = "stub-noise"',
                    'version = "1"',
                    "[backends.mygen.params]",
                    "width = 32",
                    "height = 32",
                ]
            ),
            encoding="utf-8",
        )
        reg = BackendRegistry.from_file(cfg)
        gen = build_generator(reg.resolve("mygen"))
        assert gen.generate(Caption(text="x"), 0).shape == (32, 32, 3)

    def test_json_registry(self, tmp_path):
        cfg = tmp_path / "registry.json"
        cfg.write_text(
            '{"backends": {"enc": {"kind": "encoder", "name": "stub-pixel", '
            '"version": "1", "params": {"side": 8}}}}',
            encoding="utf-8",
        )
        reg = BackendRegistry.from_file(cfg)
        enc = build_encoder(reg.resolve("enc"))
        assert enc.descriptor.params["side"] == 8

    def test_kind_mismatch_rejected(self):
        reg = BackendRegistry()
        with pytest.raises(ConfigurationError):
            build_generator(reg.resolve("stub-pixel"))

    def test_reference_stack_needs_base_url(self):
        reg = BackendRegistry()
        with pytest.raises(ConfigurationError, match="base_url"):
            build_encoder(reg.resolve("dinov2-vitb14"))

    def test_remote_dispatch_on_base_url(self):
        desc = BackendDescriptor(
            kind="encoder", name="dinov2-vitb14", version="1.0",
            params={"base_url": "http://localhost:1", "dim": 768},
        )
        enc = build_encoder(desc)
        from capcycle.backends.remote import RemoteEncoder

        assert isinstance(enc, RemoteEncoder)
