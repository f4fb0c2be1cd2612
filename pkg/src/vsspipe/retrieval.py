"""Retrieve-then-rerank shortlisting of catalog signals for a scenario."""
from __future__ import annotations

import hashlib
import math
import threading
from abc import ABC, abstractmethod
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import httpx

from .catalog import Catalog, SignalEntry, tokenize

EMBEDDING = "embedding"
LEXICAL = "lexical"


class RetrievalError(RuntimeError):
    pass


class RerankError(RuntimeError):
    pass


@dataclass(frozen=True)
class RetrievalConfig:
    retrieve_k: int = 64
    shortlist_n: int = 16
    scorer: str = LEXICAL

    def __post_init__(self):
        if self.retrieve_k < 1 or self.shortlist_n < 1:
            raise ValueError("retrieve_k and shortlist_n must be positive")
        if self.shortlist_n > self.retrieve_k:
            raise ValueError("shortlist_n must not exceed retrieve_k")
        if self.scorer not in (EMBEDDING, LEXICAL):
            raise ValueError(f"unknown scorer {self.scorer!r}")


@dataclass(frozen=True)
class ScoredCandidate:
    entry: SignalEntry
    retrieve_score: float
    rerank_score: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.retrieve_score) and math.isfinite(self.rerank_score)):
            raise ValueError(f"non-finite score for {self.entry.path}")


@dataclass(frozen=True)
class Shortlist:
    scenario_id: str
    candidates: tuple[ScoredCandidate, ...]
    config: RetrievalConfig = field(default_factory=RetrievalConfig)

    @property
    def entries(self) -> list[SignalEntry]:
        return [c.entry for c in self.candidates]

    @property
    def paths(self) -> list[str]:
        return [c.entry.path for c in self.candidates]

    @classmethod
    def from_entries(cls, scenario_id: str, entries: Sequence[SignalEntry]) -> "Shortlist":
        """An unscored shortlist over a fixed candidate pool, kept in pool order."""
        n = max(1, len(entries))
        cands = tuple(ScoredCandidate(e, 0.0, 0.0) for e in entries)
        return cls(scenario_id, cands, RetrievalConfig(n, n, LEXICAL))

    def to_delimited(self) -> str:
        lines = ["path,retrieve_score,rerank_score"]
        lines += [f"{c.entry.path},{c.retrieve_score:.6f},{c.rerank_score:.6f}" for c in self.candidates]
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_delimited(), encoding="utf-8")


def candidate_text(entry: SignalEntry) -> str:
    """Text a catalog entry is scored on: split path segments, kind and description."""
    return " ".join(tokenize(entry.path) + [entry.kind]) + " " + entry.description


class EmbeddingProvider(ABC):
    single_flight = False

    @abstractmethod
    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        ...


class RerankProvider(ABC):
    single_flight = False

    @abstractmethod
    def score(self, query: str, candidate_text: str) -> float:
        ...


class LexicalScorer(RerankProvider):
    """IDF-weighted token overlap, with document frequencies from one catalog."""

    def __init__(self, catalog: Catalog):
        self.n_docs = len(catalog)
        df: Counter[str] = Counter()
        for entry in catalog.flat:
            df.update(set(tokenize(candidate_text(entry))))
        self.df = dict(df)

    def idf(self, token: str) -> float:
        return math.log((1 + self.n_docs) / (1 + self.df.get(token, 0)))

    def score(self, query: str, candidate_text: str) -> float:
        q = set(tokenize(query))
        if not q:
            return 0.0
        shared = q & set(tokenize(candidate_text))
        return sum(self.idf(t) for t in shared) / len(q)


def lexical_score(query: str, candidate_text: str, catalog: Catalog) -> float:
    return LexicalScorer(catalog).score(query, candidate_text)


class HashingEmbedder(EmbeddingProvider):
    """Deterministic offline embedder: signed feature hashing of tokens."""

    def __init__(self, dim: int = 256):
        self.dim = dim

    def _bucket(self, token: str) -> tuple[int, float]:
        h = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        value = int.from_bytes(h, "big")
        return value % self.dim, (1.0 if (value >> 63) & 1 else -1.0)

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        out = []
        for text in texts:
            vec = [0.0] * self.dim
            for tok in tokenize(text):
                i, sign = self._bucket(tok)
                vec[i] += sign
            out.append(vec)
        return out


class HttpEmbeddingProvider(EmbeddingProvider):
    """Embeddings endpoint speaking ``{"input": [...]}`` -> ``{"data": [{"embedding": [...]}]}``."""

    def __init__(self, url: str, model: str, api_key: str | None = None,
                 client: httpx.Client | None = None, timeout: float = 30.0):
        self.url = url
        self.model = model
        self.headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self.client = client or httpx.Client(timeout=timeout)

    def embed(self, texts):
        resp = self.client.post(self.url, json={"model": self.model, "input": list(texts)}, headers=self.headers)
        resp.raise_for_status()
        data = sorted(resp.json()["data"], key=lambda d: d.get("index", 0))
        return [list(map(float, d["embedding"])) for d in data]


class HttpRerankProvider(RerankProvider):
    """Rerank endpoint speaking ``{"query", "documents"}`` -> ``{"results": [{"index", "relevance_score"}]}``."""

    def __init__(self, url: str, model: str, api_key: str | None = None,
                 client: httpx.Client | None = None, timeout: float = 30.0):
        self.url = url
        self.model = model
        self.headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self.client = client or httpx.Client(timeout=timeout)

    def score(self, query, candidate_text):
        payload = {"model": self.model, "query": query, "documents": [candidate_text]}
        resp = self.client.post(self.url, json=payload, headers=self.headers)
        resp.raise_for_status()
        return float(resp.json()["results"][0]["relevance_score"])


def _cosine(a: Sequence[float], b: Sequence[float]) -> float:
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(y * y for y in b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / (na * nb)


def _ranked(cands: Iterable[ScoredCandidate], key) -> list[ScoredCandidate]:
    return sorted(cands, key=lambda c: (-key(c), c.entry.path))


def retrieve(scenario_text: str, catalog: Catalog, config: RetrievalConfig,
             embedder: EmbeddingProvider | None = None) -> list[ScoredCandidate]:
    """The ``retrieve_k`` catalog entries most similar to the scenario text.

    With the lexical scorer the similarity is :meth:`LexicalScorer.score`;
    otherwise cosine similarity of ``embedder`` vectors.
    """
    if not len(catalog):
        raise RetrievalError("catalog is empty")
    if not scenario_text.strip():
        raise RetrievalError("scenario text is empty")
    texts = [candidate_text(e) for e in catalog.flat]
    if config.scorer == LEXICAL:
        scorer = LexicalScorer(catalog)
        scores = [scorer.score(scenario_text, t) for t in texts]
    else:
        if embedder is None:
            raise RetrievalError("embedding scorer requires an embedding provider")
        try:
            vectors = embedder.embed([scenario_text] + texts)
        except Exception as exc:
            raise RetrievalError(f"embedding provider failed: {exc}") from exc
        if len(vectors) != len(texts) + 1 or len({len(v) for v in vectors}) != 1:
            raise RetrievalError("embedding provider returned inconsistent vectors")
        query, docs = vectors[0], vectors[1:]
        scores = [_cosine(query, d) for d in docs]
    cands = [ScoredCandidate(e, s) for e, s in zip(catalog.flat, scores)]
    return _ranked(cands, lambda c: c.retrieve_score)[: config.retrieve_k]


_provider_locks: dict[int, threading.Lock] = {}
_locks_guard = threading.Lock()


def _lock_for(provider) -> threading.Lock | None:
    if not getattr(provider, "single_flight", False):
        return None
    with _locks_guard:
        return _provider_locks.setdefault(id(provider), threading.Lock())


def rerank(scenario_text: str, candidates: Sequence[ScoredCandidate], config: RetrievalConfig,
           reranker: RerankProvider, scenario_id: str = "") -> Shortlist:
    lock = _lock_for(reranker)
    scored = []
    for c in candidates:
        try:
            if lock:
                with lock:
                    s = reranker.score(scenario_text, candidate_text(c.entry))
            else:
                s = reranker.score(scenario_text, candidate_text(c.entry))
        except Exception as exc:
            raise RerankError(f"rerank provider failed on {c.entry.path}: {exc}") from exc
        scored.append(ScoredCandidate(c.entry, c.retrieve_score, float(s)))
    ranked = _ranked(scored, lambda c: c.rerank_score)[: config.shortlist_n]
    return Shortlist(scenario_id, tuple(ranked), config)


def shortlist(scenario_text: str, catalog: Catalog, config: RetrievalConfig | None = None,
              embedder: EmbeddingProvider | None = None, reranker: RerankProvider | None = None,
              scenario_id: str = "") -> Shortlist:
    """Retrieve and rerank in one call; lexical providers fill in for missing ones."""
    config = config or RetrievalConfig()
    cands = retrieve(scenario_text, catalog, config, embedder)
    return rerank(scenario_text, cands, config, reranker or LexicalScorer(catalog), scenario_id)
