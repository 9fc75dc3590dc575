"""Knowledge acquisition: a dataset-backed mock retriever and an HTTP client.

The pipeline never blocks on retrieval: any retriever failure degrades to
empty knowledge and the turn proceeds on dialogue context alone.
"""

from __future__ import annotations

import json
import os
import time
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass, field
from typing import Protocol, Sequence

from .metrics import metric_tokens, unigram_f1
from .types import ContractViolation, Episode

AUTH_ENV_VAR = "UNIRQR_SEARCH_KEY"


class RetrievalUnavailableError(RuntimeError):
    """The backend could not be reached or answered abnormally."""


@dataclass(frozen=True)
class Snippet:
    text: str
    source_id: str


@dataclass(frozen=True)
class KnowledgeResult:
    snippets: tuple[Snippet, ...]
    latency_ms: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "snippets", tuple(self.snippets))
        for s in self.snippets:
            if not s.text:
                raise ContractViolation("snippet texts must be non-empty")


EMPTY_RESULT = KnowledgeResult(snippets=())


class Retriever(Protocol):
    def search(self, query: str, limit: int = 3) -> KnowledgeResult: ...


def _check_search_args(query: str, limit: int) -> None:
    if not query or not query.strip():
        raise ContractViolation("query must be non-empty")
    if limit < 1:
        raise ContractViolation("limit must be >= 1")


class MockRetriever:
    """Replays dataset knowledge for the stored query closest to the request.

    Closeness is unigram-overlap F1 between the incoming query and each
    stored gold query; ties go to the lexicographically smallest episode id
    and zero overlap yields an empty result.
    """

    def __init__(self, entries: Sequence[tuple[str, str, str]]):
        # entries: (episode_id, gold_query, gold_knowledge)
        self.entries = sorted(entries, key=lambda e: e[0])

    @classmethod
    def from_episodes(cls, episodes: Sequence[Episode]) -> "MockRetriever":
        entries = []
        for episode in episodes:
            for ann in episode.annotations:
                if ann.needs_retrieval and ann.gold_query and ann.gold_knowledge:
                    entries.append((episode.id, ann.gold_query, ann.gold_knowledge))
        return cls(entries)

    def search(self, query: str, limit: int = 3) -> KnowledgeResult:
        _check_search_args(query, limit)
        start = time.perf_counter()
        query_tokens = metric_tokens(query)
        best_score = 0.0
        best: tuple[str, str, str] | None = None
        for entry in self.entries:
            score = unigram_f1(query_tokens, metric_tokens(entry[1]))
            if score > best_score:
                best_score, best = score, entry
        latency = (time.perf_counter() - start) * 1000.0
        if best is None:
            return KnowledgeResult(snippets=(), latency_ms=latency)
        return KnowledgeResult(
            snippets=(Snippet(text=best[2], source_id=best[0]),),
            latency_ms=latency)


def select_path(obj, path: str):
    """Resolve a dotted field selector with [n] / [*] list steps.

    Examples: "results[*].snippet", "data.items[0].text".
    """
    current = [obj]
    for part in path.split("."):
        if not part:
            continue
        name, _, rest = part.partition("[")
        if name:
            current = [c[name] for c in current if isinstance(c, dict) and name in c]
        while rest:
            index, _, rest = rest.partition("]")
            rest = rest.lstrip("[")
            expanded = []
            for c in current:
                if not isinstance(c, list):
                    continue
                if index == "*":
                    expanded.extend(c)
                else:
                    i = int(index)
                    if -len(c) <= i < len(c):
                        expanded.append(c[i])
            current = expanded
    return current


@dataclass
class HttpRetrieverConfig:
    endpoint: str                         # URL template with {query} and {limit}
    items_path: str = "results[*]"
    text_path: str = "text"
    source_path: str = "id"
    timeout_s: float = 3.0
    retries: int = 1
    auth_env: str = AUTH_ENV_VAR


class HttpRetriever:
    """GET-based search client mapping JSON responses to snippets."""

    def __init__(self, cfg: HttpRetrieverConfig):
        self.cfg = cfg

    def _request(self, url: str) -> dict:
        headers = {"Accept": "application/json"}
        key = os.environ.get(self.cfg.auth_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        req = urllib.request.Request(url, headers=headers)
        with urllib.request.urlopen(req, timeout=self.cfg.timeout_s) as resp:
            if not 200 <= resp.status < 300:
                raise RetrievalUnavailableError(f"search endpoint returned {resp.status}")
            return json.loads(resp.read().decode("utf-8"))

    def search(self, query: str, limit: int = 3) -> KnowledgeResult:
        _check_search_args(query, limit)
        url = self.cfg.endpoint.format(query=urllib.parse.quote(query), limit=limit)
        start = time.perf_counter()
        last_error: Exception | None = None
        for _ in range(1 + max(0, self.cfg.retries)):
            try:
                payload = self._request(url)
                break
            except (urllib.error.URLError, urllib.error.HTTPError, TimeoutError,
                    ConnectionError, json.JSONDecodeError, OSError) as exc:
                last_error = exc
        else:
            raise RetrievalUnavailableError(str(last_error))
        latency = (time.perf_counter() - start) * 1000.0
        snippets = []
        for item in select_path(payload, self.cfg.items_path)[:limit]:
            texts = select_path(item, self.cfg.text_path)
            if not texts or not isinstance(texts[0], str) or not texts[0]:
                continue
            sources = select_path(item, self.cfg.source_path)
            source = str(sources[0]) if sources else ""
            snippets.append(Snippet(text=texts[0], source_id=source))
        return KnowledgeResult(snippets=tuple(snippets), latency_ms=latency)


def compose_knowledge(result: KnowledgeResult, budget_tokens: int) -> str:
    """Order-preserving concatenation of snippets, capped at budget_tokens."""
    if budget_tokens < 0:
        raise ContractViolation("budget_tokens must be >= 0")
    joined = " ".join(s.text for s in result.snippets)
    tokens = joined.split()
    return " ".join(tokens[:budget_tokens])
