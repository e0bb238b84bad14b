from .base import (
    DEFAULT_PROMPT_TEMPLATE,
    Captioner,
    Encoder,
    Generator,
    count_tokens,
    is_deterministic,
    strip_special_tokens,
    truncate_to_token_limit,
)
from .registry import (
    BackendRegistry,
    build_captioner,
    build_encoder,
    build_generator,
    reference_descriptors,
)
from .remote import TOKEN_ENV_VAR, RemoteInferenceClient
from .stubs import (
    CALL_COUNTS,
    ConstantCaptioner,
    HashCaptioner,
    HistogramEncoder,
    LookupCaptioner,
    NoiseGenerator,
    OracleGenerator,
    PixelEncoder,
    reset_call_counts,
)

__all__ = [
    "CALL_COUNTS",
    "DEFAULT_PROMPT_TEMPLATE",
    "TOKEN_ENV_VAR",
    "BackendRegistry",
    "Captioner",
    "ConstantCaptioner",
    "Encoder",
    "Generator",
    "HashCaptioner",
    "HistogramEncoder",
    "LookupCaptioner",
    "NoiseGenerator",
    "OracleGenerator",
    "PixelEncoder",
    "RemoteInferenceClient",
    "build_captioner",
    "build_encoder",
    "build_generator",
    "count_tokens",
    "is_deterministic",
    "reference_descriptors",
    "reset_call_counts",
    "strip_special_tokens",
    "truncate_to_token_limit",
]
