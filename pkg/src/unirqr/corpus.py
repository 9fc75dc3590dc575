"""Corpus ingestion, task-instance expansion, and epoch batching.

The canonical interchange format is UTF-8 JSON-lines, one episode per
line:

    {"id": str,
     "turns": [{"speaker": "user"|"bot", "text": str}, ...],
     "annotations": [{"turn_index": int, "needs_retrieval": bool,
                      "gold_query": str?, "gold_knowledge": str?,
                      "gold_response": str}, ...]}
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

from .prompts import PromptScheme, PromptSide, render_source
from .types import (
    AblationConfig,
    ABLATIONS,
    ContractViolation,
    DialogueTurn,
    Episode,
    NO_QUERY_SENTINEL,
    Speaker,
    TaskInstance,
    TaskKind,
    TurnAnnotation,
    validate_episode,
)


class CorpusFormatError(ValueError):
    """A corpus record is malformed; the message names line and field."""


class CorpusStyle(str, enum.Enum):
    SINGLE_TURN = "single_turn"
    MULTI_TURN = "multi_turn"


@dataclass(frozen=True)
class CorpusConfig:
    path: str
    style: CorpusStyle = CorpusStyle.MULTI_TURN
    max_context_turns: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.max_context_turns < 1:
            raise ContractViolation("max_context_turns must be >= 1")

    @property
    def context_window(self) -> int:
        """Single-turn corpora keep only the most recent turn as context."""
        return 1 if self.style is CorpusStyle.SINGLE_TURN else self.max_context_turns


def episode_to_dict(episode: Episode) -> dict:
    out: dict = {
        "id": episode.id,
        "turns": [{"speaker": t.speaker.value, "text": t.text} for t in episode.turns],
        "annotations": [],
    }
    for ann in episode.annotations:
        record = {
            "turn_index": ann.turn_index,
            "needs_retrieval": ann.needs_retrieval,
            "gold_response": ann.gold_response,
        }
        if ann.gold_query is not None:
            record["gold_query"] = ann.gold_query
        if ann.gold_knowledge is not None:
            record["gold_knowledge"] = ann.gold_knowledge
        out["annotations"].append(record)
    return out


def _require(record: dict, field: str, line_no: int):
    if field not in record:
        raise CorpusFormatError(f"line {line_no}: missing field '{field}'")
    return record[field]


def episode_from_dict(record: dict, line_no: int = 0) -> Episode:
    episode_id = _require(record, "id", line_no)
    turns = []
    for t in _require(record, "turns", line_no):
        speaker_raw = _require(t, "speaker", line_no)
        try:
            speaker = Speaker(speaker_raw)
        except ValueError:
            raise CorpusFormatError(
                f"line {line_no}: field 'speaker' must be 'user' or 'bot', "
                f"got {speaker_raw!r}") from None
        turns.append(DialogueTurn(speaker, _require(t, "text", line_no)))
    annotations = []
    for a in _require(record, "annotations", line_no):
        annotations.append(TurnAnnotation(
            turn_index=_require(a, "turn_index", line_no),
            needs_retrieval=_require(a, "needs_retrieval", line_no),
            gold_response=_require(a, "gold_response", line_no),
            gold_query=a.get("gold_query"),
            gold_knowledge=a.get("gold_knowledge"),
        ))
    return Episode(episode_id, turns, annotations)


def load_corpus(cfg: CorpusConfig) -> list[Episode]:
    """Load and validate the canonical JSON-lines corpus at cfg.path."""
    episodes = []
    with open(cfg.path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"line {line_no}: invalid JSON ({exc.msg})") from None
            episode = episode_from_dict(record, line_no)
            violations = validate_episode(episode)
            if violations:
                raise CorpusFormatError(f"line {line_no}: {violations[0]}")
            episodes.append(episode)
    return episodes


def save_corpus(episodes: Sequence[Episode], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for episode in episodes:
            fh.write(json.dumps(episode_to_dict(episode), ensure_ascii=False) + "\n")


def render_context(turns: Sequence[DialogueTurn], upto: int, max_turns: int) -> str:
    """Speaker-labelled context over the last `max_turns` turns ending at `upto`.

    Example: "user: hi; bot: hello; user: weather?"
    """
    if not 0 <= upto < len(turns):
        raise ContractViolation(f"upto={upto} out of range for {len(turns)} turns")
    if max_turns < 1:
        raise ContractViolation("max_turns must be >= 1")
    start = max(0, upto + 1 - max_turns)
    return "; ".join(f"{t.speaker.value}: {t.text}" for t in turns[start:upto + 1])


def expand_instances(episode: Episode, scheme: PromptScheme,
                     ablation: AblationConfig = ABLATIONS["full"],
                     max_context_turns: int = 5) -> list[TaskInstance]:
    """Expand one episode into query-side and response-side task instances.

    Each annotation yields a query-side instance (QG when retrieval is
    required, RD with the "No Query" sentinel target otherwise) and a
    response-side instance whose knowledge segment is the gold knowledge or
    empty. Ablation flags suppress the corresponding instance classes;
    drop_knowledge empties the knowledge segment instead.
    """
    violations = validate_episode(episode)
    if violations:
        raise ContractViolation(f"episode {episode.id}: {violations[0]}")
    instances = []
    for ann in episode.annotations:
        context = render_context(episode.turns, ann.turn_index - 1, max_context_turns)
        wanted_query_side = not (ablation.drop_qg if ann.needs_retrieval else ablation.drop_rd)
        if wanted_query_side:
            kind = TaskKind.QG if ann.needs_retrieval else TaskKind.RD
            target = ann.gold_query if ann.needs_retrieval else NO_QUERY_SENTINEL
            instances.append(TaskInstance(
                episode_id=episode.id,
                turn_index=ann.turn_index,
                kind=kind,
                source=render_source(scheme, PromptSide.QUERY, context),
                target=target,
                needs_retrieval=ann.needs_retrieval,
            ))
        if not ablation.drop_rg:
            knowledge = "" if ablation.drop_knowledge else (ann.gold_knowledge or "")
            instances.append(TaskInstance(
                episode_id=episode.id,
                turn_index=ann.turn_index,
                kind=TaskKind.RG,
                source=render_source(scheme, PromptSide.RESPONSE, context, knowledge),
                target=ann.gold_response,
                needs_retrieval=ann.needs_retrieval,
            ))
    return instances


def expand_corpus(episodes: Sequence[Episode], scheme: PromptScheme,
                  ablation: AblationConfig = ABLATIONS["full"],
                  cfg: CorpusConfig | None = None) -> list[TaskInstance]:
    window = cfg.context_window if cfg is not None else 5
    out = []
    for episode in episodes:
        out.extend(expand_instances(episode, scheme, ablation, window))
    return out


def _order_key(seed: int, epoch: int, inst: TaskInstance) -> bytes:
    ident = f"{seed}:{epoch}:{inst.episode_id}:{inst.turn_index}:{inst.kind.value}"
    return hashlib.blake2b(ident.encode("utf-8"), digest_size=16).digest()


class BatchStream:
    """Deterministic epoch-ordered stream of mixed-task batches.

    Instances are globally shuffled per epoch by a stable content hash of
    (seed, epoch, instance identity), so the relative order of surviving
    instances is unchanged when an instance class is removed.
    """

    def __init__(self, instances: Sequence[TaskInstance], batch_size: int, seed: int):
        if batch_size < 1:
            raise ContractViolation("batch_size must be >= 1")
        self.instances = list(instances)
        self.batch_size = batch_size
        self.seed = seed

    def epoch_order(self, epoch: int) -> list[TaskInstance]:
        keyed = sorted(
            self.instances,
            key=lambda inst: (_order_key(self.seed, epoch, inst),
                              inst.episode_id, inst.turn_index, inst.kind.value),
        )
        return keyed

    def epoch_batches(self, epoch: int) -> list[list[TaskInstance]]:
        order = self.epoch_order(epoch)
        return [order[i:i + self.batch_size]
                for i in range(0, len(order), self.batch_size)]

    def iter_epochs(self, epochs: int, start_epoch: int = 0) -> Iterator[tuple[int, int, list[TaskInstance]]]:
        """Yield (epoch, batch_index, batch) over the requested epochs."""
        for epoch in range(start_epoch, epochs):
            for batch_index, batch in enumerate(self.epoch_batches(epoch)):
                yield epoch, batch_index, batch
