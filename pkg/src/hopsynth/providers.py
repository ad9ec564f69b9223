"""Uniform access to chat, embedding and rerank providers.

HTTP providers speak OpenAI-style chat-completion / embedding bodies and a
Cohere-style rerank body (field-by-field reference in docs/formats.md).
Scripted in-process providers answer from rule tables keyed by the prompt
text alone, so they are deterministic under concurrency. A disk cache keyed
by a stable request hash can be bypassed per call (required for repeated-run
reliability sampling).
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import httpx
import numpy as np

DEFAULT_TEMPERATURE = 0.0
DEFAULT_TOP_P = 0.9
DEFAULT_MAX_TOKENS = 8192


class ProviderError(Exception):
    pass


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = DEFAULT_TEMPERATURE
    top_p: float = DEFAULT_TOP_P
    max_tokens: int = DEFAULT_MAX_TOKENS
    sampling_enabled: bool = False

    def key(self) -> str:
        return json.dumps(
            [self.temperature, self.top_p, self.max_tokens, self.sampling_enabled]
        )


@dataclass(frozen=True)
class ProviderSpec:
    kind: str  # chat | embedding | rerank
    endpoint: str = ""
    model_name: str = ""
    auth: str = ""  # name of the env var holding the API key
    price_in_per_Mtok: float = 0.0
    price_out_per_Mtok: float = 0.0

    def __post_init__(self):
        if self.kind not in ("chat", "embedding", "rerank"):
            raise ValueError(f"unknown provider kind {self.kind!r}")
        if self.price_in_per_Mtok < 0 or self.price_out_per_Mtok < 0:
            raise ValueError("prices must be non-negative")


@dataclass
class UsageRecord:
    role: str  # synthesis | judging | diagnostic
    request_count: int = 0
    input_tokens: int = 0
    output_tokens: int = 0
    estimated: bool = False  # any counted tokens came from the length/4 fallback

    def to_dict(self) -> dict:
        return {
            "role": self.role,
            "request_count": self.request_count,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "estimated": self.estimated,
        }


class UsageTracker:
    """Thread-safe per-role token accounting."""

    ROLES = ("synthesis", "judging", "diagnostic")

    def __init__(self):
        self._lock = threading.Lock()
        self.records: dict[str, UsageRecord] = {r: UsageRecord(role=r) for r in self.ROLES}

    def add(self, role: str, input_tokens: int, output_tokens: int, estimated: bool = False):
        if role not in self.records:
            raise ValueError(f"unknown usage role {role!r}")
        if input_tokens < 0 or output_tokens < 0:
            raise ValueError("token counts must be non-negative")
        with self._lock:
            rec = self.records[role]
            rec.request_count += 1
            rec.input_tokens += input_tokens
            rec.output_tokens += output_tokens
            rec.estimated = rec.estimated or estimated

    def to_dict(self) -> dict:
        return {r: rec.to_dict() for r, rec in sorted(self.records.items())}

    def save(self, path: str | Path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8")


def estimate_tokens(text: str) -> int:
    """Fallback token estimate when the provider reports no usage."""
    return max(1, len(text) // 4)


def estimate_cost(
    request_count: int,
    input_tokens: int,
    output_tokens: int,
    price_in_per_Mtok: float,
    price_out_per_Mtok: float,
) -> float:
    """Dollar cost of a usage total at per-million-token prices."""
    del request_count  # informational; pricing is per token
    return (input_tokens * price_in_per_Mtok + output_tokens * price_out_per_Mtok) / 1e6


class ResponseCache:
    """Disk cache of provider responses, one JSON file per request hash."""

    def __init__(self, directory: str | Path):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    @staticmethod
    def request_key(spec: ProviderSpec, payload: str) -> str:
        blob = json.dumps([spec.endpoint, spec.model_name, payload])
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def get(self, key: str):
        path = self.dir / f"{key}.json"
        with self._lock:
            if path.exists():
                return json.loads(path.read_text(encoding="utf-8"))["response"]
        return None

    def put(self, key: str, payload: str, response):
        path = self.dir / f"{key}.json"
        with self._lock:
            path.write_text(
                json.dumps({"request": payload, "response": response}, indent=2),
                encoding="utf-8",
            )


def _with_retries(fn: Callable[[], httpx.Response], attempts: int = 3) -> httpx.Response:
    delay = 0.5
    last: Exception | None = None
    for i in range(attempts):
        try:
            resp = fn()
        except httpx.TransportError as exc:
            last = exc
            if i < attempts - 1:
                time.sleep(min(delay, 8.0))
                delay *= 2
            continue
        if resp.status_code // 100 == 2:
            return resp
        raise ProviderError(f"provider returned {resp.status_code}: {resp.text[:500]}")
    raise ProviderError(f"transport failure after {attempts} attempts: {last}")


class HttpChatProvider:
    """OpenAI-style chat-completions client with retry, cache and accounting."""

    def __init__(
        self,
        spec: ProviderSpec,
        usage: UsageTracker | None = None,
        role: str = "synthesis",
        cache: ResponseCache | None = None,
        attempts: int = 3,
        transport: httpx.BaseTransport | None = None,
        timeout: float = 120.0,
    ):
        if spec.kind != "chat":
            raise ValueError("spec.kind must be 'chat'")
        self.spec = spec
        self.usage = usage
        self.role = role
        self.cache = cache
        self.attempts = attempts
        self._client = httpx.Client(transport=transport, timeout=timeout)

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.spec.auth:
            key = os.environ.get(self.spec.auth, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def chat(self, prompt: str, params: GenerationParams | None = None, use_cache: bool = True) -> str:
        params = params or GenerationParams()
        body = {
            "model": self.spec.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0.0 if not params.sampling_enabled else params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
        }
        payload = json.dumps([body, params.key()], sort_keys=True)
        key = ResponseCache.request_key(self.spec, payload)
        if use_cache and self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                return hit["text"]

        resp = _with_retries(
            lambda: self._client.post(self.spec.endpoint, json=body, headers=self._headers()),
            self.attempts,
        )
        data = resp.json()
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise ProviderError(f"unexpected chat response shape: {str(data)[:300]}")

        usage = data.get("usage") or {}
        in_tok = usage.get("prompt_tokens")
        out_tok = usage.get("completion_tokens")
        estimated = in_tok is None or out_tok is None
        if self.usage is not None:
            self.usage.add(
                self.role,
                in_tok if in_tok is not None else estimate_tokens(prompt),
                out_tok if out_tok is not None else estimate_tokens(text),
                estimated=estimated,
            )
        if use_cache and self.cache is not None:
            self.cache.put(key, payload, {"text": text})
        return text


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ProviderError("zero-norm embedding")
    return matrix / norms


class HttpEmbeddingProvider:
    """OpenAI-style embeddings client; returns L2-normalized vectors."""

    def __init__(
        self,
        spec: ProviderSpec,
        cache: ResponseCache | None = None,
        attempts: int = 3,
        transport: httpx.BaseTransport | None = None,
        timeout: float = 120.0,
    ):
        if spec.kind != "embedding":
            raise ValueError("spec.kind must be 'embedding'")
        self.spec = spec
        self.cache = cache
        self.attempts = attempts
        self._client = httpx.Client(transport=transport, timeout=timeout)
        self._headers = {"Content-Type": "application/json"}
        if spec.auth and os.environ.get(spec.auth):
            self._headers["Authorization"] = f"Bearer {os.environ[spec.auth]}"

    def embed(self, texts: Sequence[str], use_cache: bool = True) -> np.ndarray:
        if not texts:
            raise ValueError("texts must be non-empty")
        body = {"model": self.spec.model_name, "input": list(texts)}
        payload = json.dumps(body, sort_keys=True)
        key = ResponseCache.request_key(self.spec, payload)
        if use_cache and self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                return np.asarray(hit["vectors"], dtype=np.float64)

        resp = _with_retries(
            lambda: self._client.post(self.spec.endpoint, json=body, headers=self._headers),
            self.attempts,
        )
        data = resp.json()
        try:
            rows = [item["embedding"] for item in data["data"]]
        except (KeyError, TypeError):
            raise ProviderError(f"unexpected embedding response shape: {str(data)[:300]}")
        dims = {len(r) for r in rows}
        if len(dims) != 1:
            raise ProviderError(f"dimension mismatch across batch: {sorted(dims)}")
        matrix = _normalize_rows(np.asarray(rows, dtype=np.float64))
        if use_cache and self.cache is not None:
            self.cache.put(key, payload, {"vectors": matrix.tolist()})
        return matrix


class HttpRerankProvider:
    """Rerank scorer: POST {model, query, documents} -> results[].relevance_score."""

    def __init__(
        self,
        spec: ProviderSpec,
        attempts: int = 3,
        transport: httpx.BaseTransport | None = None,
        timeout: float = 120.0,
    ):
        if spec.kind != "rerank":
            raise ValueError("spec.kind must be 'rerank'")
        self.spec = spec
        self.attempts = attempts
        self._client = httpx.Client(transport=transport, timeout=timeout)
        self._headers = {"Content-Type": "application/json"}
        if spec.auth and os.environ.get(spec.auth):
            self._headers["Authorization"] = f"Bearer {os.environ[spec.auth]}"

    def rerank_score(self, query: str, doc: str) -> float:
        return self.rerank_batch(query, [doc])[0]

    def rerank_batch(self, query: str, docs: Sequence[str]) -> list[float]:
        body = {"model": self.spec.model_name, "query": query, "documents": list(docs)}
        resp = _with_retries(
            lambda: self._client.post(self.spec.endpoint, json=body, headers=self._headers),
            self.attempts,
        )
        data = resp.json()
        try:
            scores = [0.0] * len(docs)
            for item in data["results"]:
                scores[item["index"]] = float(item["relevance_score"])
        except (KeyError, IndexError, TypeError):
            raise ProviderError(f"unexpected rerank response shape: {str(data)[:300]}")
        return scores


# ---------------------------------------------------------------------------
# scripted / derived providers for tests and reproducible runs


@dataclass
class ScriptRule:
    pattern: str
    response: str

    def apply(self, prompt: str) -> str | None:
        m = re.search(self.pattern, prompt, flags=re.DOTALL)
        if m is None:
            return None
        return m.expand(self.response)


class ScriptedChatProvider:
    """In-process chat provider answering purely from the prompt text.

    Resolution order: exact-prompt map, then regex rules (first match wins,
    response templates may use backreferences), then an optional callable,
    then the default response.
    """

    def __init__(
        self,
        exact: dict[str, str] | None = None,
        rules: Sequence[ScriptRule] = (),
        fn: Callable[[str], str | None] | None = None,
        default: str | None = None,
        usage: UsageTracker | None = None,
        role: str = "synthesis",
    ):
        self.exact = dict(exact or {})
        self.rules = list(rules)
        self.fn = fn
        self.default = default
        self.usage = usage
        self.role = role
        self.calls = 0
        self._lock = threading.Lock()

    def chat(self, prompt: str, params: GenerationParams | None = None, use_cache: bool = True) -> str:
        with self._lock:
            self.calls += 1
        text = self.exact.get(prompt)
        if text is None:
            for rule in self.rules:
                text = rule.apply(prompt)
                if text is not None:
                    break
        if text is None and self.fn is not None:
            text = self.fn(prompt)
        if text is None:
            if self.default is None:
                raise ProviderError(f"no scripted response for prompt: {prompt[:120]!r}")
            text = self.default
        if self.usage is not None:
            self.usage.add(self.role, estimate_tokens(prompt), estimate_tokens(text), estimated=True)
        return text


class CachedChatProvider:
    """Wrap any chat provider with the shared disk cache."""

    def __init__(self, inner, spec: ProviderSpec, cache: ResponseCache):
        self.inner = inner
        self.spec = spec
        self.cache = cache

    def chat(self, prompt: str, params: GenerationParams | None = None, use_cache: bool = True) -> str:
        params = params or GenerationParams()
        payload = json.dumps([prompt, params.key()])
        key = ResponseCache.request_key(self.spec, payload)
        if use_cache:
            hit = self.cache.get(key)
            if hit is not None:
                return hit["text"]
        text = self.inner.chat(prompt, params, use_cache=use_cache)
        if use_cache:
            self.cache.put(key, payload, {"text": text})
        return text


class ScriptedEmbeddingProvider:
    """Embeddings from an explicit text->vector map (L2-normalized on read)."""

    def __init__(self, vectors: dict[str, Sequence[float]], dim: int | None = None):
        self.vectors = {k: np.asarray(v, dtype=np.float64) for k, v in vectors.items()}
        self.dim = dim if dim is not None else (len(next(iter(self.vectors.values()))) if self.vectors else 0)

    def embed(self, texts: Sequence[str], use_cache: bool = True) -> np.ndarray:
        if not texts:
            raise ValueError("texts must be non-empty")
        rows = []
        for t in texts:
            if t not in self.vectors:
                raise ProviderError(f"no scripted embedding for text: {t[:80]!r}")
            rows.append(self.vectors[t])
        dims = {len(r) for r in rows}
        if len(dims) != 1:
            raise ProviderError(f"dimension mismatch across batch: {sorted(dims)}")
        return _normalize_rows(np.asarray(rows, dtype=np.float64))


class HashedEmbeddingProvider:
    """Deterministic pseudo-embeddings seeded by a content hash of the text."""

    def __init__(self, dim: int = 32):
        self.dim = dim

    def _vector(self, text: str) -> np.ndarray:
        seed = int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")
        rng = np.random.default_rng(seed)
        return rng.standard_normal(self.dim)

    def embed(self, texts: Sequence[str], use_cache: bool = True) -> np.ndarray:
        if not texts:
            raise ValueError("texts must be non-empty")
        return _normalize_rows(np.asarray([self._vector(t) for t in texts]))


class ScriptedRerankProvider:
    """Rerank scores from a pair map, regex rules or a callable."""

    def __init__(
        self,
        pair_scores: dict[tuple[str, str], float] | None = None,
        fn: Callable[[str, str], float | None] | None = None,
        rules: Sequence[ScriptRule] = (),
        default: float | None = None,
    ):
        self.pair_scores = dict(pair_scores or {})
        self.fn = fn
        self.rules = list(rules)
        self.default = default

    def rerank_score(self, query: str, doc: str) -> float:
        if (query, doc) in self.pair_scores:
            return self.pair_scores[(query, doc)]
        if self.fn is not None:
            score = self.fn(query, doc)
            if score is not None:
                return float(score)
        probe = f"QUERY: {query}\nDOC: {doc}"
        for rule in self.rules:
            out = rule.apply(probe)
            if out is not None:
                return float(out)
        if self.default is not None:
            return self.default
        raise ProviderError(f"no scripted rerank score for query {query[:60]!r}")

    def rerank_batch(self, query: str, docs: Sequence[str]) -> list[float]:
        return [self.rerank_score(query, d) for d in docs]


def text_key(text: str) -> str:
    """Stable 16-hex content key shared with the trainer's score tables."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


class ReplayRerankProvider:
    """Replay a trained scorer from a TSV of (query-hash, doc-hash, score)."""

    def __init__(self, scores_path: str | Path, default: float = 0.0):
        self.table: dict[tuple[str, str], float] = {}
        for line in Path(scores_path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            qh, dh, score = line.split("\t")
            self.table[(qh, dh)] = float(score)
        self.default = default

    def rerank_score(self, query: str, doc: str) -> float:
        return self.table.get((text_key(query), text_key(doc)), self.default)

    def rerank_batch(self, query: str, docs: Sequence[str]) -> list[float]:
        return [self.rerank_score(query, d) for d in docs]


class HashedRerankProvider:
    """Deterministic pseudo-scores for scripted end-to-end runs."""

    def rerank_score(self, query: str, doc: str) -> float:
        digest = hashlib.sha256(f"{query}\x00{doc}".encode("utf-8")).digest()
        return int.from_bytes(digest[:4], "big") / 2**32

    def rerank_batch(self, query: str, docs: Sequence[str]) -> list[float]:
        return [self.rerank_score(query, d) for d in docs]
