"""The three prompt varieties and sentinel parsing for retrieval decisions.

A prompt is either a special task token (<QG>/<RG>), a discrete natural
language template with one "[X]" slot for the context, or a trainable
continuous prefix resolved at embedding level by the model.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from .tokenizer import QG_TOKEN, RG_TOKEN, SEP_TOKEN
from .types import Decision, NO_QUERY_SENTINEL


class PromptConfigError(ValueError):
    pass


class DegenerateDecisionError(ValueError):
    """The model emitted an empty query-side string."""


class PromptVariety(str, enum.Enum):
    SPECIAL_TOKEN = "special_token"
    DISCRETE = "discrete"
    CONTINUOUS = "continuous"


class PromptSide(str, enum.Enum):
    QUERY = "query"
    RESPONSE = "response"


PLACEHOLDER = "[X]"

DEFAULT_QUERY_TEMPLATE = "Please generate a short query for this conversation: [X]"
DEFAULT_RESPONSE_TEMPLATE = "Please generate a response for the bot to reply the user: [X]"


@dataclass(frozen=True)
class PromptScheme:
    variety: PromptVariety = PromptVariety.SPECIAL_TOKEN
    continuous_length: int = 10
    query_template: str = DEFAULT_QUERY_TEMPLATE
    response_template: str = DEFAULT_RESPONSE_TEMPLATE

    def __post_init__(self):
        if self.continuous_length < 1:
            raise PromptConfigError("continuous_length must be >= 1")
        if self.variety is PromptVariety.DISCRETE:
            for name, tpl in (("query_template", self.query_template),
                              ("response_template", self.response_template)):
                if tpl.count(PLACEHOLDER) != 1:
                    raise PromptConfigError(
                        f"{name} must contain exactly one {PLACEHOLDER} slot")

    def to_dict(self) -> dict:
        return {
            "variety": self.variety.value,
            "continuous_length": self.continuous_length,
            "query_template": self.query_template,
            "response_template": self.response_template,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PromptScheme":
        return cls(
            variety=PromptVariety(data.get("variety", "special_token")),
            continuous_length=int(data.get("continuous_length", 10)),
            query_template=data.get("query_template", DEFAULT_QUERY_TEMPLATE),
            response_template=data.get("response_template", DEFAULT_RESPONSE_TEMPLATE),
        )


@dataclass(frozen=True)
class PromptSpec:
    """A resolved prefix: surface text around the context plus virtual slots."""

    side: PromptSide
    prefix_text: str
    suffix_text: str
    virtual_len: int


def render_prompt(scheme: PromptScheme, side: PromptSide) -> PromptSpec:
    """Resolve the active prompt variety for one input side."""
    if scheme.variety is PromptVariety.SPECIAL_TOKEN:
        token = QG_TOKEN if side is PromptSide.QUERY else RG_TOKEN
        return PromptSpec(side, token + " ", "", 0)
    if scheme.variety is PromptVariety.DISCRETE:
        template = (scheme.query_template if side is PromptSide.QUERY
                    else scheme.response_template)
        prefix, suffix = template.split(PLACEHOLDER)
        return PromptSpec(side, prefix, suffix, 0)
    return PromptSpec(side, "", "", scheme.continuous_length)


_SEP_STANDALONE = re.compile(
    r"(?<!\S)" + re.escape(SEP_TOKEN) + r"(?!\S)")


def neutralize_separator(text: str) -> str:
    """Disarm standalone separator markers occurring inside raw text."""
    return _SEP_STANDALONE.sub("[sep]", text)


def render_source(scheme: PromptScheme, side: PromptSide, context: str,
                  knowledge: str | None = None) -> str:
    """Assemble the surface input string for one task side.

    Query side: prompt + context. Response side: prompt + context + [SEP]
    + knowledge, where the knowledge segment may be empty.
    """
    spec = render_prompt(scheme, side)
    source = spec.prefix_text + neutralize_separator(context) + spec.suffix_text
    if side is PromptSide.RESPONSE:
        source += " " + SEP_TOKEN
        if knowledge:
            source += " " + neutralize_separator(knowledge)
    return source


def normalize_decision_text(text: str) -> str:
    return " ".join(text.split()).casefold()


_NO_QUERY_NORMALIZED = normalize_decision_text(NO_QUERY_SENTINEL)


def parse_decision(decoded: str) -> Decision:
    """Map a decoded query-side output to NoQuery or Query(text).

    Sentinel matching is whitespace- and case-insensitive. An empty decode
    raises DegenerateDecisionError; callers treat that as NoQuery.
    """
    stripped = decoded.strip()
    if not stripped:
        raise DegenerateDecisionError("empty query-side generation")
    if normalize_decision_text(stripped) == _NO_QUERY_NORMALIZED:
        return Decision.no_query()
    return Decision.query(stripped)
