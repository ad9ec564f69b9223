"""Declarative run configuration with environment-variable interpolation.

One YAML file names every provider slot (generator, filter, polisher,
judges, solvers, embedder, reranker), the corpus paths, retrieval
parameters, thresholds, seeds and budgets. `${VAR}` inside string values
is replaced from the environment; secrets stay out of the file. Field
reference lives in docs/config.md.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .providers import (
    CachedChatProvider,
    HashedEmbeddingProvider,
    HashedRerankProvider,
    HttpChatProvider,
    HttpEmbeddingProvider,
    HttpRerankProvider,
    ProviderSpec,
    ReplayRerankProvider,
    ResponseCache,
    ScriptedChatProvider,
    ScriptedEmbeddingProvider,
    ScriptedRerankProvider,
    ScriptRule,
    UsageTracker,
)
from .retrieval import MmrParams

_ENV_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


class ConfigError(Exception):
    pass


def _interpolate(value):
    if isinstance(value, str):
        def sub(m):
            name = m.group(1)
            if name not in os.environ:
                raise ConfigError(f"environment variable {name} is not set")
            return os.environ[name]
        return _ENV_RE.sub(sub, value)
    if isinstance(value, dict):
        return {k: _interpolate(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_interpolate(v) for v in value]
    return value


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path
    store_path: Path
    index_dir: Path
    output_dir: Path
    seed: int
    parallelism: int
    mmr: MmrParams
    min_entity: int
    min_attr: int
    budgets: dict[str, int]
    targets: dict[str, int]
    cache_dir: Path | None
    usage: UsageTracker = field(default_factory=UsageTracker)

    def provider_cfg(self, slot: str):
        providers = self.raw.get("providers", {})
        if slot not in providers:
            raise ConfigError(f"provider slot {slot!r} is not configured")
        return providers[slot]

    def _resolve_path(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else self.base_dir / path

    def _cache(self) -> ResponseCache | None:
        if self.cache_dir is None:
            return None
        return ResponseCache(self.cache_dir)

    def chat_provider(self, slot: str, role: str = "synthesis"):
        cfg = self.provider_cfg(slot)
        return self._chat_from_cfg(cfg, slot, role)

    def _chat_from_cfg(self, cfg: dict, slot: str, role: str):
        ptype = cfg.get("type", "http")
        if ptype == "scripted":
            script = json.loads(self._resolve_path(cfg["script"]).read_text(encoding="utf-8"))
            provider = ScriptedChatProvider(
                exact=script.get("exact", {}),
                rules=[ScriptRule(r["pattern"], r["response"]) for r in script.get("rules", [])],
                default=script.get("default"),
                usage=self.usage,
                role=role,
            )
            cache = self._cache()
            if cache is not None and cfg.get("cache", False):
                spec = ProviderSpec(kind="chat", model_name=f"scripted:{slot}")
                provider = CachedChatProvider(provider, spec, cache)
            return provider
        if ptype == "http":
            spec = ProviderSpec(
                kind="chat",
                endpoint=cfg["endpoint"],
                model_name=cfg.get("model", ""),
                auth=cfg.get("auth_env", ""),
                price_in_per_Mtok=float(cfg.get("price_in_per_mtok", 0.0)),
                price_out_per_Mtok=float(cfg.get("price_out_per_mtok", 0.0)),
            )
            return HttpChatProvider(spec, usage=self.usage, role=role, cache=self._cache())
        raise ConfigError(f"unknown chat provider type {ptype!r} for slot {slot!r}")

    def judge_providers(self) -> dict[str, object]:
        cfgs = self.raw.get("providers", {}).get("judges", [])
        if not cfgs:
            raise ConfigError("no judge providers configured")
        out = {}
        for i, cfg in enumerate(cfgs):
            name = cfg.get("name", cfg.get("model", f"judge{i}"))
            out[name] = self._chat_from_cfg(cfg, f"judges[{i}]", role="judging")
        return out

    def solver_providers(self) -> dict[str, object]:
        cfgs = self.raw.get("providers", {}).get("solvers", [])
        if not cfgs:
            raise ConfigError("no solver providers configured")
        out = {}
        for i, cfg in enumerate(cfgs):
            name = cfg.get("name", cfg.get("model", f"solver{i}"))
            out[name] = self._chat_from_cfg(cfg, f"solvers[{i}]", role="diagnostic")
        return out

    def embedding_provider(self):
        cfg = self.provider_cfg("embedder")
        ptype = cfg.get("type", "http")
        if ptype == "hashed":
            return HashedEmbeddingProvider(dim=int(cfg.get("dim", 32)))
        if ptype == "scripted":
            vectors = json.loads(self._resolve_path(cfg["vectors"]).read_text(encoding="utf-8"))
            return ScriptedEmbeddingProvider(vectors)
        if ptype == "http":
            spec = ProviderSpec(
                kind="embedding",
                endpoint=cfg["endpoint"],
                model_name=cfg.get("model", ""),
                auth=cfg.get("auth_env", ""),
            )
            return HttpEmbeddingProvider(spec, cache=self._cache())
        raise ConfigError(f"unknown embedding provider type {ptype!r}")

    def rerank_provider(self):
        cfg = self.provider_cfg("reranker")
        ptype = cfg.get("type", "http")
        if ptype == "hashed":
            return HashedRerankProvider()
        if ptype == "replay":
            return ReplayRerankProvider(self._resolve_path(cfg["scores"]), default=float(cfg.get("default", 0.0)))
        if ptype == "scripted":
            script = json.loads(self._resolve_path(cfg["script"]).read_text(encoding="utf-8"))
            return ScriptedRerankProvider(
                rules=[ScriptRule(r["pattern"], r["response"]) for r in script.get("rules", [])],
                default=script.get("default"),
            )
        if ptype == "http":
            spec = ProviderSpec(
                kind="rerank",
                endpoint=cfg["endpoint"],
                model_name=cfg.get("model", ""),
                auth=cfg.get("auth_env", ""),
            )
            return HttpRerankProvider(spec)
        raise ConfigError(f"unknown rerank provider type {ptype!r}")


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}")
    raw = _interpolate(raw)
    base = path.parent

    corpus = raw.get("corpus", {})
    run = raw.get("run", {})
    retrieval = raw.get("retrieval", {})
    thresholds = raw.get("thresholds", {})

    def resolve(p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else base / q

    min_entity = int(thresholds.get("min_entity", 5))
    min_attr = int(thresholds.get("min_attr", 4))
    if not (1 <= min_entity <= 5 and 1 <= min_attr <= 5):
        raise ConfigError("thresholds must lie within 1-5")

    try:
        mmr = MmrParams(
            lambda1=float(retrieval.get("lambda1", 0.87)),
            lambda2=float(retrieval.get("lambda2", 0.03)),
            lambda3=float(retrieval.get("lambda3", 0.1)),
            pool_size=int(retrieval.get("pool_size", 50)),
            k=int(retrieval.get("k", 10)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc))

    cache_cfg = raw.get("cache", {})
    cache_dir = resolve(cache_cfg["dir"]) if cache_cfg.get("enabled") and "dir" in cache_cfg else None

    return RunConfig(
        raw=raw,
        base_dir=base,
        store_path=resolve(corpus.get("store", "store")),
        index_dir=resolve(corpus.get("index", "index")),
        output_dir=resolve(run.get("output_dir", "out")),
        seed=int(run.get("seed", 0)),
        parallelism=int(run.get("parallelism", 4)),
        mmr=mmr,
        min_entity=min_entity,
        min_attr=min_attr,
        budgets={k: int(v) for k, v in raw.get("budgets", {}).items()},
        targets={k: int(v) for k, v in raw.get("targets", {}).items()},
        cache_dir=cache_dir,
    )
