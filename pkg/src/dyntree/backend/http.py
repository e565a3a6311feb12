"""Chat-completions HTTP backend with log-probabilities and retries."""

from __future__ import annotations

import logging
import os
import time

import httpx

from .base import (BackendRequest, BackendResponse, BackendResponseError, BackendTransportError,
                   CallAccounting)

logger = logging.getLogger(__name__)

DEFAULT_MODEL = "meta-llama/Llama-3.3-70B-Instruct-Turbo-Free"
API_KEY_ENV = "DYNTREE_API_KEY"
API_BASE_ENV = "DYNTREE_API_BASE"
CACHE_DIR_ENV = "DYNTREE_CACHE_DIR"


def api_settings(base_url: str | None = None, api_key: str | None = None) -> tuple[str, str | None]:
    base = base_url or os.environ.get(API_BASE_ENV)
    if not base:
        raise BackendTransportError(f"no API base URL (set {API_BASE_ENV})")
    return base, api_key if api_key is not None else os.environ.get(API_KEY_ENV)


def parse_chat_response(body: dict) -> tuple[str, tuple[float, ...]]:
    try:
        choice = body["choices"][0]
        text = choice["message"]["content"] or ""
    except (KeyError, IndexError, TypeError) as exc:
        raise BackendResponseError(f"malformed completion: {exc!r}") from exc
    logprobs: list[float] = []
    lp = choice.get("logprobs")
    if isinstance(lp, dict):
        if isinstance(lp.get("content"), list):
            logprobs = [float(t["logprob"]) for t in lp["content"] if "logprob" in t]
        elif isinstance(lp.get("token_logprobs"), list):
            logprobs = [float(x) for x in lp["token_logprobs"] if x is not None]
    return text, tuple(logprobs)


class HttpChatBackend:
    def __init__(self, model_id: str = DEFAULT_MODEL, base_url: str | None = None,
                 api_key: str | None = None, client: httpx.Client | None = None,
                 max_attempts: int = 3, backoff: float = 0.5, timeout: float = 60.0,
                 sleep=time.sleep):
        base, key = api_settings(base_url, api_key)
        self.model_id = model_id
        self.url = base.rstrip("/") + "/chat/completions"
        self._headers = {"Authorization": f"Bearer {key}"} if key else {}
        self._client = client or httpx.Client(timeout=timeout)
        self.max_attempts = max_attempts
        self.backoff = backoff
        self._sleep = sleep
        self.accounting = CallAccounting()

    def _body(self, request: BackendRequest) -> dict:
        return {
            "model": self.model_id,
            "messages": [{"role": "user", "content": request.prompt_text}],
            "temperature": request.temperature,
            "logprobs": True,
        }

    def complete(self, request: BackendRequest) -> BackendResponse:
        last_exc: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self._client.post(self.url, json=self._body(request), headers=self._headers)
            except httpx.TransportError as exc:
                last_exc = exc
                logger.warning("attempt %d/%d failed: %s", attempt + 1, self.max_attempts, exc)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_exc = BackendTransportError(f"HTTP {resp.status_code}")
                logger.warning("attempt %d/%d got HTTP %d", attempt + 1, self.max_attempts, resp.status_code)
                continue
            if resp.status_code >= 400:
                raise BackendResponseError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                body = resp.json()
            except ValueError as exc:
                raise BackendResponseError("response body is not JSON") from exc
            text, logprobs = parse_chat_response(body)
            self.accounting.charge(1, judge=request.kind.value == "JUDGE")
            return BackendResponse(text, logprobs, 1)
        raise BackendTransportError(f"gave up after {self.max_attempts} attempts: {last_exc}")
