import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from unirqr.retrieval import (
    HttpRetriever,
    HttpRetrieverConfig,
    KnowledgeResult,
    MockRetriever,
    RetrievalUnavailableError,
    Snippet,
    compose_knowledge,
    select_path,
)
from unirqr.types import ContractViolation


class TestMockRetriever:
    def test_exact_match_lookup(self):
        retriever = MockRetriever([("ep1", "weather beijing", "K1")])
        result = retriever.search("weather beijing")
        assert [s.text for s in result.snippets] == ["K1"]
        assert result.snippets[0].source_id == "ep1"

    def test_zero_overlap_gives_empty(self):
        retriever = MockRetriever([("ep1", "weather beijing", "K1")])
        assert retriever.search("zzz unseen terms").snippets == ()

    def test_tie_breaks_to_smallest_episode_id(self):
        retriever = MockRetriever([("ep9", "kelp facts", "K9"),
                                   ("ep2", "kelp facts", "K2")])
        result = retriever.search("kelp facts")
        assert result.snippets[0].source_id == "ep2"

    def test_empty_query_rejected(self):
        retriever = MockRetriever([])
        with pytest.raises(ContractViolation):
            retriever.search("  ")

    def test_limit_must_be_positive(self):
        retriever = MockRetriever([])
        with pytest.raises(ContractViolation):
            retriever.search("q", limit=0)

    def test_deterministic_for_fixed_store(self):
        retriever = MockRetriever([("ep1", "amber facts", "A"),
                                   ("ep2", "kelp news", "B")])
        first = retriever.search("amber facts today")
        second = retriever.search("amber facts today")
        assert [s.text for s in first.snippets] == [s.text for s in second.snippets]


class TestComposeKnowledge:
    def test_concatenation(self):
        result = KnowledgeResult((Snippet("a b", "1"), Snippet("c", "2")))
        assert compose_knowledge(result, 10) == "a b c"

    def test_truncation(self):
        result = KnowledgeResult((Snippet("a b c d", "1"),))
        assert compose_knowledge(result, 2) == "a b"

    def test_empty_result(self):
        assert compose_knowledge(KnowledgeResult(()), 5) == ""

    def test_negative_budget_rejected(self):
        with pytest.raises(ContractViolation):
            compose_knowledge(KnowledgeResult(()), -1)


class TestSelectPath:
    def test_wildcard_list(self):
        obj = {"results": [{"text": "a"}, {"text": "b"}]}
        assert select_path(obj, "results[*].text") == ["a", "b"]

    def test_indexed_list(self):
        obj = {"data": {"items": [{"t": "x"}, {"t": "y"}]}}
        assert select_path(obj, "data.items[1].t") == ["y"]

    def test_missing_path_gives_empty(self):
        assert select_path({"a": 1}, "b[*].c") == []


def _serve_json(payload, status=200):
    class Handler(BaseHTTPRequestHandler):
        def do_GET(self):
            body = json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def log_message(self, fmt, *args):
            pass

    server = HTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server


class TestHttpRetriever:
    def test_maps_json_results_to_snippets(self):
        server = _serve_json({"results": [
            {"text": "alpha beta", "id": "r1"},
            {"text": "gamma", "id": "r2"},
            {"text": "delta", "id": "r3"},
        ]})
        try:
            port = server.server_address[1]
            retriever = HttpRetriever(HttpRetrieverConfig(
                endpoint=f"http://127.0.0.1:{port}/search?q={{query}}&n={{limit}}"))
            result = retriever.search("anything", limit=2)
            assert [s.text for s in result.snippets] == ["alpha beta", "gamma"]
            assert result.snippets[0].source_id == "r1"
        finally:
            server.shutdown()

    def test_unreachable_endpoint_raises_unavailable(self):
        retriever = HttpRetriever(HttpRetrieverConfig(
            endpoint="http://127.0.0.1:9/search?q={query}&n={limit}",
            timeout_s=0.2, retries=0))
        with pytest.raises(RetrievalUnavailableError):
            retriever.search("query")

    def test_non_2xx_raises_unavailable(self):
        server = _serve_json({"error": "nope"}, status=500)
        try:
            port = server.server_address[1]
            retriever = HttpRetriever(HttpRetrieverConfig(
                endpoint=f"http://127.0.0.1:{port}/s?q={{query}}&n={{limit}}",
                retries=0))
            with pytest.raises(RetrievalUnavailableError):
                retriever.search("query")
        finally:
            server.shutdown()
