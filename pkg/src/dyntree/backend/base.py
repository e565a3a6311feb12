from __future__ import annotations

import enum
import hashlib
import json
import logging
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

logger = logging.getLogger(__name__)


class RequestKind(str, enum.Enum):
    CLOSED_BOOK = "CLOSED_BOOK"
    OPEN_BOOK = "OPEN_BOOK"
    DECOMPOSE = "DECOMPOSE"
    REFORMULATE = "REFORMULATE"
    AGGREGATE = "AGGREGATE"
    JUDGE = "JUDGE"


class BackendError(RuntimeError):
    pass


class BackendTransportError(BackendError):
    """Network/transport failure; retryable."""


class BackendResponseError(BackendError):
    """Response could not be interpreted; not retried."""


@dataclass(frozen=True)
class BackendRequest:
    kind: RequestKind
    prompt_text: str
    context_passages: tuple[str, ...] = ()
    temperature: float = 0.0
    cache_allowed: bool = True
    # structured copy of the prompt inputs, for backends that do not read prose
    payload: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class BackendResponse:
    text: str
    token_logprobs: tuple[float, ...] = ()
    calls_charged: int = 1


class CallAccounting:
    """Thread-safe call counters; judge calls are kept out of the inference cost."""

    def __init__(self):
        self._lock = threading.Lock()
        self._inference = 0
        self._judge = 0

    @property
    def inference_calls(self) -> int:
        return self._inference

    @property
    def judge_calls(self) -> int:
        return self._judge

    def charge(self, n: int, judge: bool = False) -> None:
        if n < 0:
            raise ValueError("cannot charge a negative number of calls")
        with self._lock:
            if judge:
                self._judge += n
            else:
                self._inference += n

    def snapshot(self) -> tuple[int, int]:
        with self._lock:
            return self._inference, self._judge


class Backend(Protocol):
    model_id: str
    accounting: CallAccounting

    def complete(self, request: BackendRequest) -> BackendResponse: ...


def cache_key(request: BackendRequest, model_id: str) -> str:
    prompt_hash = hashlib.sha256(request.prompt_text.encode("utf-8")).hexdigest()
    material = json.dumps([request.kind.value, prompt_hash, repr(float(request.temperature)), model_id])
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


class CachedBackend:
    """Response cache in front of another backend.

    Hits charge nothing unless ``charge_hits`` is set. With ``cache_dir`` each
    entry is one JSON file named by its key; disk errors degrade to misses.
    """

    def __init__(self, inner: Backend, cache_dir: str | Path | None = None, charge_hits: bool = False):
        self.inner = inner
        self.model_id = inner.model_id
        self.charge_hits = charge_hits
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.accounting = CallAccounting()
        self.hits = 0
        self._mem: dict[str, BackendResponse] = {}
        self._lock = threading.Lock()
        if self.cache_dir is not None:
            try:
                self.cache_dir.mkdir(parents=True, exist_ok=True)
            except OSError as exc:
                logger.warning("cache dir %s unusable: %s", self.cache_dir, exc)
                self.cache_dir = None

    def _read(self, key: str) -> BackendResponse | None:
        with self._lock:
            hit = self._mem.get(key)
        if hit is not None or self.cache_dir is None:
            return hit
        path = self.cache_dir / f"{key}.json"
        try:
            with open(path, encoding="utf-8") as fh:
                obj = json.load(fh)
            resp = BackendResponse(obj["text"], tuple(obj["token_logprobs"]), 1)
        except FileNotFoundError:
            return None
        except (OSError, ValueError, KeyError) as exc:
            logger.warning("ignoring unreadable cache entry %s: %s", path, exc)
            return None
        with self._lock:
            self._mem[key] = resp
        return resp

    def _write(self, key: str, resp: BackendResponse) -> None:
        with self._lock:
            self._mem[key] = resp
        if self.cache_dir is None:
            return
        path = self.cache_dir / f"{key}.json"
        tmp = path.with_suffix(f".{os.getpid()}.{threading.get_ident()}.tmp")
        try:
            with open(tmp, "w", encoding="utf-8") as fh:
                json.dump({"text": resp.text, "token_logprobs": list(resp.token_logprobs)}, fh)
            os.replace(tmp, path)
        except OSError as exc:
            logger.warning("cache write failed for %s: %s", path, exc)

    def complete(self, request: BackendRequest) -> BackendResponse:
        key = cache_key(request, self.model_id) if request.cache_allowed else None
        if key is not None:
            hit = self._read(key)
            if hit is not None:
                self.hits += 1
                charged = 1 if self.charge_hits else 0
                self.accounting.charge(charged, judge=request.kind is RequestKind.JUDGE)
                return BackendResponse(hit.text, hit.token_logprobs, charged)
        resp = self.inner.complete(request)
        if key is not None:
            self._write(key, resp)
        self.accounting.charge(resp.calls_charged, judge=request.kind is RequestKind.JUDGE)
        return resp
