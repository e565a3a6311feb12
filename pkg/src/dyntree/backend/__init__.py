from .base import (Backend, BackendError, BackendRequest, BackendResponse, BackendResponseError,
                   BackendTransportError, CachedBackend, CallAccounting, RequestKind, cache_key)
from .client import DecompositionFailed, KnowledgeClient, SamplingConfig, parse_decomposition
from .judge import f1_judge, normalize_answer, token_f1
from .prompts import PromptSet

__all__ = [
    "Backend", "BackendError", "BackendRequest", "BackendResponse", "BackendResponseError",
    "BackendTransportError", "CachedBackend", "CallAccounting", "RequestKind", "cache_key",
    "DecompositionFailed", "KnowledgeClient", "SamplingConfig", "parse_decomposition",
    "f1_judge", "normalize_answer", "token_f1", "PromptSet",
]
