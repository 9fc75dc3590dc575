"""Inference orchestration: retrieval decision -> query -> search -> response.

Each turn produces a full TurnTrace. The pipeline is pure given a frozen
model snapshot and retriever, and degrades to knowledge-free response
generation whenever retrieval is skipped or fails.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Sequence

from .generate import DecodingConfig, generate_text
from .model import TinyReferenceModel
from .prompts import (
    DegenerateDecisionError,
    PromptScheme,
    PromptSide,
    parse_decision,
    render_source,
)
from .corpus import render_context
from .retrieval import EMPTY_RESULT, Retriever, compose_knowledge
from .types import (
    ContractViolation,
    Decision,
    DecisionVariant,
    DialogueTurn,
    NO_QUERY_SENTINEL,
    Speaker,
    TaskKind,
)


class ForceMode(str, enum.Enum):
    AUTO = "auto"
    ALWAYS_RETRIEVE = "always_retrieve"
    NEVER_RETRIEVE = "never_retrieve"


@dataclass(frozen=True)
class TurnTimings:
    rd_qg_ms: float = 0.0
    search_ms: float = 0.0
    rg_ms: float = 0.0

    def to_dict(self) -> dict:
        return {"rd_qg_ms": self.rd_qg_ms, "search_ms": self.search_ms,
                "rg_ms": self.rg_ms}


@dataclass(frozen=True)
class TurnTrace:
    context_rendered: str
    decision: Decision
    query: str | None
    knowledge: str
    response: str
    timings: TurnTimings = field(default_factory=TurnTimings)
    degenerate_response: bool = False

    def __post_init__(self):
        if self.decision.variant is DecisionVariant.NO_QUERY:
            if self.query is not None or self.knowledge != "":
                raise ContractViolation(
                    "NoQuery turns must carry no query and empty knowledge")
        else:
            if self.query != self.decision.query_text:
                raise ContractViolation("trace query must mirror the decision query")

    def to_dict(self) -> dict:
        return {"decision": self.decision.variant.value, "query": self.query,
                "knowledge": self.knowledge, "response": self.response,
                "timings": self.timings.to_dict()}


class PipelineError(RuntimeError):
    """Model failure mid-turn; carries whatever trace fields were produced."""

    def __init__(self, message: str, partial: dict):
        super().__init__(message)
        self.partial = partial

    def partial_wire(self) -> dict:
        wire = {}
        for key, value in self.partial.items():
            if isinstance(value, Decision):
                wire["decision"] = value.variant.value
            else:
                wire[key] = value
        return wire


def sentinel_first_token_ids(model: TinyReferenceModel) -> tuple[int, ...]:
    """Ids that can open the "No Query" sentinel, for decode-time suppression."""
    ids = model.tokenizer.encode(NO_QUERY_SENTINEL)
    return (ids[0],) if ids else ()


def respond(session_context: Sequence[DialogueTurn],
            model: TinyReferenceModel,
            retriever: Retriever | None,
            scheme: PromptScheme,
            decoding: DecodingConfig,
            mode: ForceMode = ForceMode.AUTO,
            max_context_turns: int = 5,
            knowledge_budget_tokens: int = 64,
            search_limit: int = 3) -> TurnTrace:
    """Run one full turn over the current session context.

    The last turn must belong to the user. In `always_retrieve` mode the
    sentinel's opening token is banned at the first decode step and the
    output is taken verbatim as a query; `never_retrieve` skips the query
    side entirely.
    """
    if not session_context:
        raise ContractViolation("session context must be non-empty")
    if session_context[-1].speaker is not Speaker.USER:
        raise ContractViolation("the last context turn must be a user turn")
    context = render_context(session_context, len(session_context) - 1, max_context_turns)
    partial: dict = {"context_rendered": context}

    decision = Decision.no_query()
    rd_qg_ms = 0.0
    if mode is not ForceMode.NEVER_RETRIEVE:
        query_source = render_source(scheme, PromptSide.QUERY, context)
        bans = sentinel_first_token_ids(model) if mode is ForceMode.ALWAYS_RETRIEVE else ()
        query_decoding = DecodingConfig(
            strategy=decoding.strategy, max_new_tokens=decoding.max_new_tokens,
            beam_size=decoding.beam_size, temperature=decoding.temperature,
            seed=decoding.seed, length_penalty=decoding.length_penalty,
            banned_first_ids=tuple(bans))
        start = time.perf_counter()
        try:
            encoded = model.encode_source(query_source, TaskKind.QG)
            decoded = generate_text(model, encoded, query_decoding)
        except Exception as exc:
            raise PipelineError(f"query-side generation failed: {exc}", partial) from exc
        rd_qg_ms = (time.perf_counter() - start) * 1000.0
        if mode is ForceMode.ALWAYS_RETRIEVE:
            # Degenerate empty output still falls back to NoQuery.
            decision = Decision.query(decoded.strip()) if decoded.strip() else Decision.no_query()
        else:
            try:
                decision = parse_decision(decoded)
            except DegenerateDecisionError:
                decision = Decision.no_query()
    partial["decision"] = decision

    knowledge = ""
    search_ms = 0.0
    if decision.is_query and retriever is not None:
        start = time.perf_counter()
        try:
            result = retriever.search(decision.query_text, search_limit)
        except Exception:
            # A retrieval outage never blocks the turn.
            result = EMPTY_RESULT
        search_ms = (time.perf_counter() - start) * 1000.0
        knowledge = compose_knowledge(result, knowledge_budget_tokens)
    partial["query"] = decision.query_text
    partial["knowledge"] = knowledge

    response_source = render_source(scheme, PromptSide.RESPONSE, context, knowledge)
    start = time.perf_counter()
    try:
        encoded = model.encode_source(response_source, TaskKind.RG)
        response = generate_text(model, encoded, decoding)
    except Exception as exc:
        raise PipelineError(f"response generation failed: {exc}", partial) from exc
    rg_ms = (time.perf_counter() - start) * 1000.0

    return TurnTrace(
        context_rendered=context,
        decision=decision,
        query=decision.query_text,
        knowledge=knowledge,
        response=response,
        timings=TurnTimings(rd_qg_ms=rd_qg_ms, search_ms=search_ms, rg_ms=rg_ms),
        degenerate_response=(response == ""),
    )
