"""Sentence embeddings: a feature-hashed bag of words (desk mode) or a remote API."""

from __future__ import annotations

import enum
import functools
import hashlib
import re

import numpy as np

_TOKEN_RE = re.compile(r"[a-z0-9]+")
HASH_KEY = b"dyntree-embed-v1"
DESK_DIM = 64
REMOTE_DIM = 384


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


class EmbeddingMode(str, enum.Enum):
    HASHED = "hashed"
    REMOTE = "remote"


@functools.lru_cache(maxsize=65536)
def _token_slot(token: str, dim: int) -> tuple[int, float]:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=HASH_KEY).digest()
    value = int.from_bytes(digest, "little")
    sign = 1.0 if (value >> 63) & 1 == 0 else -1.0
    return value % dim, sign


def _normalize(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    return vec if norm == 0.0 else vec / norm


class HashedEmbedder:
    mode = EmbeddingMode.HASHED

    def __init__(self, dim: int = DESK_DIM):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim
        self._cache: dict[str, np.ndarray] = {}

    def token_vector(self, token: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        idx, sign = _token_slot(token, self.dim)
        vec[idx] = sign
        return vec

    def embed(self, text: str) -> np.ndarray:
        cached = self._cache.get(text)
        if cached is not None:
            return cached.copy()
        vec = np.zeros(self.dim)
        for token in tokenize(text):
            idx, sign = _token_slot(token, self.dim)
            vec[idx] += sign
        vec = _normalize(vec)
        if len(self._cache) < 100_000:
            self._cache[text] = vec
        return vec.copy()


class RemoteEmbedder:
    """Embeddings endpoint client; shares auth env vars with the chat backend."""

    mode = EmbeddingMode.REMOTE

    def __init__(self, model: str, base_url: str | None = None, api_key: str | None = None,
                 dim: int = REMOTE_DIM, client=None, timeout: float = 30.0):
        import httpx

        from .backend.http import api_settings

        base, key = api_settings(base_url, api_key)
        self.model = model
        self.dim = dim
        self.url = base.rstrip("/") + "/embeddings"
        self._headers = {"Authorization": f"Bearer {key}"} if key else {}
        self._client = client or httpx.Client(timeout=timeout)

    def embed(self, text: str) -> np.ndarray:
        if not text.strip():
            return np.zeros(self.dim)
        resp = self._client.post(self.url, json={"model": self.model, "input": text},
                                 headers=self._headers)
        resp.raise_for_status()
        vec = np.asarray(resp.json()["data"][0]["embedding"], dtype=float)
        if vec.shape != (self.dim,):
            raise ValueError(f"embedding has {vec.shape[0]} components, expected {self.dim}")
        return _normalize(vec)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = float(np.sqrt(np.dot(u, u)))
    nv = float(np.sqrt(np.dot(v, v)))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    # dot product is commutative elementwise, and nu*nv commutes, so this is exactly symmetric
    value = float(np.dot(u, v)) / (nu * nv)
    return max(-1.0, min(1.0, value))
