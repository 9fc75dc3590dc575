"""Shared domain types for the unified dialogue pipeline.

Everything here is immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass


class ContractViolation(ValueError):
    """A caller broke an operation's precondition."""


class Speaker(str, enum.Enum):
    USER = "user"
    BOT = "bot"


class TaskKind(str, enum.Enum):
    """The three task buckets sharing one model.

    RD and QG share the query-side input format; they differ only in how
    their losses are bucketed and weighted.
    """

    RD = "rd"
    QG = "qg"
    RG = "rg"


#: Literal target whose generation encodes a negative retrieval decision.
NO_QUERY_SENTINEL = "No Query"


@dataclass(frozen=True)
class DialogueTurn:
    speaker: Speaker
    text: str


@dataclass(frozen=True)
class TurnAnnotation:
    """Per-bot-turn supervision: retrieval flag, gold query/knowledge/response."""

    turn_index: int
    needs_retrieval: bool
    gold_response: str
    gold_query: str | None = None
    gold_knowledge: str | None = None


@dataclass(frozen=True)
class Episode:
    """One annotated dialogue."""

    id: str
    turns: tuple[DialogueTurn, ...]
    annotations: tuple[TurnAnnotation, ...]

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(self.turns))
        object.__setattr__(self, "annotations", tuple(self.annotations))


@dataclass(frozen=True)
class TaskInstance:
    """A single training/eval example with a fully rendered source string."""

    episode_id: str
    turn_index: int
    kind: TaskKind
    source: str
    target: str
    needs_retrieval: bool

    def __post_init__(self):
        if self.kind is TaskKind.RD and self.target != NO_QUERY_SENTINEL:
            raise ContractViolation(
                f"RD instance target must be {NO_QUERY_SENTINEL!r}, got {self.target!r}")
        if self.kind is TaskKind.QG and self.target == NO_QUERY_SENTINEL:
            raise ContractViolation("QG instance target must be a real query")
        if self.kind is TaskKind.RG:
            seps = self.source.split().count("[SEP]")
            if seps != 1:
                raise ContractViolation(
                    f"RG source must contain the [SEP] marker exactly once, found {seps}")


class DecisionVariant(str, enum.Enum):
    NO_QUERY = "no_query"
    QUERY = "query"


@dataclass(frozen=True)
class Decision:
    """Parsed query-side model output: either NoQuery or Query(text)."""

    variant: DecisionVariant
    query_text: str | None = None

    def __post_init__(self):
        if self.variant is DecisionVariant.QUERY:
            if not self.query_text or not self.query_text.strip():
                raise ContractViolation("Query decision requires non-empty query_text")
        elif self.query_text is not None:
            raise ContractViolation("NoQuery decision carries no query_text")

    @classmethod
    def no_query(cls) -> "Decision":
        return cls(DecisionVariant.NO_QUERY)

    @classmethod
    def query(cls, text: str) -> "Decision":
        return cls(DecisionVariant.QUERY, text)

    @property
    def is_query(self) -> bool:
        return self.variant is DecisionVariant.QUERY


@dataclass(frozen=True)
class LossWeights:
    """Per-task loss weights (alpha: RD, beta: QG, gamma: RG)."""

    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ContractViolation("loss weights must be nonnegative")
        if self.alpha == self.beta == self.gamma == 0:
            raise ContractViolation("at least one loss weight must be positive")

    def for_kind(self, kind: TaskKind) -> float:
        return {TaskKind.RD: self.alpha, TaskKind.QG: self.beta, TaskKind.RG: self.gamma}[kind]


#: Loss-weight presets mirroring the published training setups.
LOSS_WEIGHT_PRESETS = {
    "dusinc": LossWeights(alpha=0.2, beta=1.0, gamma=1.0),
    "wizint": LossWeights(alpha=1.2, beta=1.0, gamma=1.0),
}


@dataclass(frozen=True)
class AblationConfig:
    """Which task/input components are removed for a training/eval run."""

    name: str
    label: str
    drop_rd: bool = False
    drop_qg: bool = False
    drop_rg: bool = False
    drop_knowledge: bool = False


ABLATIONS = {
    a.name: a
    for a in (
        AblationConfig("full", "full"),
        AblationConfig("wo_rd", "w/o RD", drop_rd=True),
        AblationConfig("wo_rg", "w/o RG", drop_rg=True),
        AblationConfig("wo_knowledge", "w/o knowledge", drop_knowledge=True),
        AblationConfig("wo_knowledge_rd", "w/o knowledge & RD",
                       drop_knowledge=True, drop_rd=True),
        AblationConfig("wo_qg_rd", "w/o QG & RD", drop_qg=True, drop_rd=True),
    )
}


def validate_episode(episode: Episode) -> list[str]:
    """Check every episode invariant; returns violation descriptions.

    Never raises: an empty list means the episode is well-formed.
    """
    violations = []
    for i, turn in enumerate(episode.turns):
        if not turn.text.strip():
            violations.append(f"turns[{i}].text: empty after trimming")
        if not isinstance(turn.speaker, Speaker):
            violations.append(f"turns[{i}].speaker: not a valid speaker")
    prev_index = -1
    for j, ann in enumerate(episode.annotations):
        where = f"annotations[{j}]"
        idx = ann.turn_index
        if not 0 <= idx < len(episode.turns):
            violations.append(f"{where}.turn_index: {idx} out of range")
        elif episode.turns[idx].speaker is not Speaker.BOT:
            violations.append(f"{where}.turn_index: {idx} does not point at a bot turn")
        elif idx == 0:
            violations.append(f"{where}.turn_index: annotated turn has no preceding context")
        if idx <= prev_index:
            violations.append(f"{where}.turn_index: indices must be strictly increasing")
        prev_index = idx
        if ann.needs_retrieval:
            if not ann.gold_query or not ann.gold_query.strip():
                violations.append(f"{where}.gold_query: required when needs_retrieval")
        else:
            if ann.gold_query is not None:
                violations.append(f"{where}.gold_query: must be absent when not needs_retrieval")
            if ann.gold_knowledge is not None:
                violations.append(
                    f"{where}.gold_knowledge: present only when needs_retrieval")
    return violations
