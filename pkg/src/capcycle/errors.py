"""Exception hierarchy shared by every capcycle module.

The CLI maps these onto its exit-code contract: configuration problems
exit 2, backend/transport problems exit 3, cache corruption exits 4.
"""

from __future__ import annotations


class CapcycleError(Exception):
    """Base class for all toolkit errors."""


class ContractError(CapcycleError, ValueError):
    """A caller violated a documented precondition."""


class DegenerateInputError(CapcycleError, ValueError):
    """Input is structurally valid but statistically unusable (zero vector, all ties)."""


class ConfigurationError(CapcycleError):
    """Bad registry entry, unknown backend name, unserializable descriptor param."""


class TransportError(CapcycleError):
    """Remote backend unreachable or persistently failing at the HTTP layer."""


class BackendFaultError(CapcycleError):
    """A backend produced output violating its contract (empty caption, NaN embedding)."""


class ContentPolicyError(CapcycleError):
    """Generation refused or filtered by the provider; carries the provider message."""


class CacheIntegrityError(CapcycleError):
    """Stored bytes no longer match the digest recorded for a cache entry."""


class IngestionError(CapcycleError):
    """A dataset source file is missing, malformed, or fails its count checks."""


class StageError(CapcycleError):
    """Wraps a backend error with the pipeline stage where it happened."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
