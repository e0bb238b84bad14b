"""HTTP/JSON client for remote inference providers.

Wire protocol (all POST, JSON bodies):

    /v1/caption   {"image_b64": str, "prompt": str}          -> {"caption": str}
    /v1/generate  {"text": str, "seed": int, "params": {..}} -> {"image_b64": str}
    /v1/embed     {"image_b64": str}                         -> {"vector": [..], "dim": N}

Errors come back as {"error": {"code": str, "message": str}}. Requests
carry ``Authorization: Bearer <token>`` when the IMAGE2TEXT2IMAGE_API_TOKEN
environment variable is set.

The client makes at most ``max_retries`` attempts per call, each bounded
by ``timeout_s``, sleeping ``backoff_base_s * 2**k`` between attempts.
Connection failures, timeouts, HTTP 5xx and 429 are retried; other
statuses are not. Concurrent requests are capped by ``max_in_flight``.
"""

from __future__ import annotations

import base64
import os
import threading
import time
from typing import Any, Mapping

import numpy as np
import requests

from .. import images
from ..errors import (
    BackendFaultError,
    ConfigurationError,
    ContentPolicyError,
    TransportError,
)
from ..types import BackendDescriptor, ImageRef
from .base import Captioner, Encoder, Generator

TOKEN_ENV_VAR = "IMAGE2TEXT2IMAGE_API_TOKEN"
_RETRYABLE_STATUSES = frozenset({429, 500, 502, 503, 504})


class RemoteInferenceClient:
    def __init__(
        self,
        base_url: str,
        timeout_s: float = 30.0,
        max_retries: int = 3,
        backoff_base_s: float = 0.5,
        max_in_flight: int = 4,
        session: requests.Session | None = None,
    ):
        if max_retries < 1:
            raise ConfigurationError("max_retries must be at least 1")
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.backoff_base_s = backoff_base_s
        self._session = session or requests.Session()
        self._gate = threading.BoundedSemaphore(max_in_flight)

    def caption(self, image_b64: str, prompt: str) -> str:
        body = self._post("/v1/caption", {"image_b64": image_b64, "prompt": prompt})
        text = body.get("caption")
        if not isinstance(text, str):
            raise BackendFaultError("caption endpoint returned no 'caption' field")
        return text

    def generate(self, text: str, seed: int, params: Mapping[str, Any]) -> bytes:
        body = self._post(
            "/v1/generate", {"text": text, "seed": seed, "params": dict(params)}
        )
        b64 = body.get("image_b64")
        if not isinstance(b64, str):
            raise BackendFaultError("generate endpoint returned no 'image_b64' field")
        try:
            return base64.b64decode(b64, validate=True)
        except Exception as exc:
            raise BackendFaultError(f"generate endpoint returned invalid base64: {exc}") from exc

    def embed(self, image_b64: str) -> list[float]:
        body = self._post("/v1/embed", {"image_b64": image_b64})
        vector = body.get("vector")
        dim = body.get("dim")
        if not isinstance(vector, list) or not isinstance(dim, int) or len(vector) != dim:
            raise BackendFaultError("embed endpoint returned inconsistent vector/dim")
        return [float(v) for v in vector]

    def _post(self, path: str, payload: dict[str, Any]) -> dict[str, Any]:
        url = self.base_url + path
        headers = {}
        token = os.environ.get(TOKEN_ENV_VAR)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            if attempt:
                time.sleep(self.backoff_base_s * 2 ** (attempt - 1))
            try:
                with self._gate:
                    resp = self._session.post(
                        url, json=payload, headers=headers, timeout=self.timeout_s
                    )
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_error = exc
                continue
            if resp.status_code in _RETRYABLE_STATUSES:
                last_error = TransportError(f"{url} returned {resp.status_code}")
                continue
            return self._decode(url, resp)
        raise TransportError(
            f"{url} failed after {self.max_retries} attempts: {last_error}"
        )

    @staticmethod
    def _decode(url: str, resp: requests.Response) -> dict[str, Any]:
        try:
            body = resp.json()
        except ValueError as exc:
            raise BackendFaultError(f"{url} returned non-JSON body") from exc
        if resp.ok:
            if not isinstance(body, dict):
                raise BackendFaultError(f"{url} returned a non-object body")
            return body
        err = body.get("error", {}) if isinstance(body, dict) else {}
        code = err.get("code", f"http_{resp.status_code}")
        message = err.get("message", resp.reason)
        if "content_policy" in str(code):
            raise ContentPolicyError(f"{code}: {message}")
        raise BackendFaultError(f"{url} rejected request ({code}): {message}")


def _image_b64(image: ImageRef) -> str:
    return base64.b64encode(images.encode_png(images.load_rgb(image))).decode("ascii")


class RemoteCaptioner(Captioner):
    def __init__(self, descriptor: BackendDescriptor, client: RemoteInferenceClient):
        self.descriptor = descriptor
        self.client = client

    def _caption_text(self, image: ImageRef, prompt_template: str) -> str:
        return self.client.caption(_image_b64(image), prompt_template)


class RemoteGenerator(Generator):
    def __init__(self, descriptor: BackendDescriptor, client: RemoteInferenceClient):
        self.descriptor = descriptor
        self.client = client

    def _generate_pixels(self, text: str, seed: int) -> np.ndarray:
        wire_params = {
            k: v
            for k, v in self.descriptor.params.items()
            if k not in ("base_url", "timeout_s", "max_retries", "backoff_base_s",
                         "max_in_flight", "deterministic")
        }
        png = self.client.generate(text, seed, wire_params)
        try:
            return images.decode_rgb_bytes(png)
        except Exception as exc:
            raise BackendFaultError(f"generated payload is not a decodable image: {exc}") from exc


class RemoteEncoder(Encoder):
    def __init__(self, descriptor: BackendDescriptor, client: RemoteInferenceClient):
        self.descriptor = descriptor
        self.client = client

    def _embed(self, pixels: np.ndarray) -> np.ndarray:
        b64 = base64.b64encode(images.encode_png(pixels)).decode("ascii")
        vector = np.asarray(self.client.embed(b64), dtype=np.float64)
        expected = self.descriptor.params.get("dim")
        if expected is not None and vector.shape[0] != int(expected):
            raise BackendFaultError(
                f"encoder returned dim {vector.shape[0]}, descriptor pins {expected}"
            )
        return vector


def client_from_params(params: Mapping[str, Any]) -> RemoteInferenceClient:
    base_url = params.get("base_url")
    if not base_url:
        raise ConfigurationError("remote backend needs a 'base_url' param")
    return RemoteInferenceClient(
        base_url=str(base_url),
        timeout_s=float(params.get("timeout_s", 30.0)),
        max_retries=int(params.get("max_retries", 3)),
        backoff_base_s=float(params.get("backoff_base_s", 0.5)),
        max_in_flight=int(params.get("max_in_flight", 4)),
    )
