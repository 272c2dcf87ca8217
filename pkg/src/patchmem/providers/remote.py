"""HTTP client for the model-server sidecar.

Blocking JSON-over-HTTP calls with bounded retries. Connection failures,
timeouts, and 5xx responses are retried then surfaced as TransportError;
4xx responses mean the request itself was malformed and raise
ContractViolationError immediately. Every embedding is validated and
renormalized at this boundary.
"""

import time

import numpy as np
import requests

from ..decompose import WindowSpec, validate_image
from ..errors import ContractViolationError, TransportError
from .base import (
    ImageEmbeddings,
    Provider,
    ProviderDescriptor,
    ensure_unit,
    ensure_unit_rows,
)
from .wire import decode_tensor, encode_tensor, rle_decode

DEFAULT_TIMEOUT = 60.0
DEFAULT_RETRIES = 2
RETRY_BACKOFF = 0.5


class RemoteProvider(Provider):
    def __init__(self, base_url: str, timeout: float = DEFAULT_TIMEOUT,
                 retries: int = DEFAULT_RETRIES, backoff: float = RETRY_BACKOFF,
                 session: requests.Session | None = None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._session = session or requests.Session()
        self._descriptor: ProviderDescriptor | None = None

    def _request(self, method: str, path: str, payload: dict | None = None) -> dict:
        url = f"{self.base_url}{path}"
        attempts = 0
        last_error = None
        while attempts <= self.retries:
            attempts += 1
            try:
                if method == "GET":
                    resp = self._session.get(url, timeout=self.timeout)
                else:
                    resp = self._session.post(url, json=payload, timeout=self.timeout)
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_error = exc
                time.sleep(self.backoff * attempts)
                continue
            if 400 <= resp.status_code < 500:
                raise ContractViolationError(
                    f"{path} rejected ({resp.status_code}): {resp.text[:300]}")
            if resp.status_code >= 500:
                last_error = TransportError(
                    f"{path} failed ({resp.status_code})", attempts=attempts)
                time.sleep(self.backoff * attempts)
                continue
            try:
                return resp.json()
            except ValueError as exc:
                raise ContractViolationError(f"{path}: non-JSON response") from exc
        raise TransportError(
            f"{path} unreachable after {attempts} attempts: {last_error}",
            retryable=True, attempts=attempts)

    def ping(self) -> bool:
        try:
            self._request("GET", "/healthz")
            return True
        except (TransportError, ContractViolationError):
            return False

    def descriptor(self) -> ProviderDescriptor:
        if self._descriptor is None:
            body = self._request("GET", "/v1/descriptor")
            try:
                self._descriptor = ProviderDescriptor(
                    name=str(body["name"]), dim=int(body["dim"]),
                    patch_size=int(body["patch_size"]),
                    deterministic=bool(body["deterministic"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise ContractViolationError(f"bad descriptor: {body}") from exc
        return self._descriptor

    def embed_window(self, image: np.ndarray, window: WindowSpec) -> np.ndarray:
        arr, grid = self.check_canonical(image)
        self.check_window(grid, window)
        body = self._request("POST", "/v1/embed_window", {
            "image": encode_tensor(arr),
            "window": {"row0": window.row0, "col0": window.col0,
                       "rows": window.rows, "cols": window.cols},
        })
        return ensure_unit(decode_tensor(body["embedding"], "window embedding"))

    def embed_image(self, image: np.ndarray) -> ImageEmbeddings:
        arr, grid = self.check_canonical(image)
        body = self._request("POST", "/v1/embed_image", {"image": encode_tensor(arr)})
        cls = ensure_unit(decode_tensor(body["class_token"], "class token"))
        tokens = decode_tensor(body["patch_tokens"], "patch tokens")
        if tokens.ndim != 3 or tokens.shape[:2] != (grid.rows, grid.cols):
            raise ContractViolationError(
                f"patch tokens shape {tokens.shape}, expected "
                f"({grid.rows}, {grid.cols}, dim)")
        flat = ensure_unit_rows(tokens.reshape(-1, tokens.shape[2]), "patch tokens")
        return ImageEmbeddings(class_token=cls,
                               patch_tokens=flat.reshape(tokens.shape))

    def embed_templates(self, templates: list[str]) -> np.ndarray:
        if not templates:
            raise ContractViolationError("template list is empty")
        body = self._request("POST", "/v1/embed_text",
                             {"templates": list(templates)})
        out = decode_tensor(body["embeddings"], "text embeddings")
        if out.ndim != 2 or out.shape[0] != len(templates):
            raise ContractViolationError(
                f"text embeddings shape {out.shape} for {len(templates)} templates")
        return ensure_unit_rows(out, "text embeddings")

    def segment_objects(self, image: np.ndarray) -> list[np.ndarray]:
        arr = validate_image(image)
        body = self._request("POST", "/v1/segment", {"image": encode_tensor(arr)})
        masks = []
        for item in body.get("masks", []):
            mask = rle_decode(item)
            if mask.shape != arr.shape[:2]:
                raise ContractViolationError(
                    f"mask shape {mask.shape} does not match image {arr.shape[:2]}")
            masks.append(mask)
        return masks
