"""Deterministic synthetic corpus for desk-scale training and tests.

Half the episodes ask about a topic (retrieval required, with a gold query
and grounding knowledge), half are chitchat (no retrieval). Patterns are
deliberately regular so a tiny backbone can overfit them quickly.
"""

from __future__ import annotations

import numpy as np

from .types import DialogueTurn, Episode, Speaker, TurnAnnotation

TOPICS = (
    "amber", "basalt", "cedar", "dunes", "ember", "falcon", "garnet", "harbor",
    "indigo", "juniper", "kelp", "lagoon", "marble", "nectar", "onyx", "poplar",
    "quartz", "reef", "saffron", "tundra", "umber", "violet", "walnut", "yarrow",
    "zephyr", "birch", "copper", "delta", "fjord", "grove",
)

ATTRIBUTES = (
    "ancient", "bright", "coastal", "dense", "early", "fragile", "golden",
    "hardy", "inland", "jagged", "layered", "mild", "narrow", "open", "pale",
    "quiet", "rare", "smooth", "tall", "uneven", "vast", "warm", "young",
    "brittle", "curved", "deep", "fresh", "grand", "heavy", "light",
)

ASK_TEMPLATES = (
    "tell me about {topic}",
    "what do you know about {topic}",
    "please explain {topic} to me",
)

GREETINGS = (
    ("hi there", "hello how can i help you"),
    ("hello friend", "hi what can i do for you"),
    ("how are you doing", "i am fine thanks for asking"),
    ("good morning", "good morning to you too"),
    ("thanks a lot", "you are welcome"),
    ("see you later", "goodbye have a nice day"),
)


def topic_query(topic: str) -> str:
    return f"{topic} facts"


def topic_knowledge(topic: str, rng: np.random.Generator) -> str:
    a, b = rng.choice(len(ATTRIBUTES), size=2, replace=False)
    return f"{topic} is {ATTRIBUTES[a]} and {ATTRIBUTES[b]}"


def make_synthetic_corpus(n_episodes: int = 200, seed: int = 13) -> list[Episode]:
    rng = np.random.default_rng(seed)
    episodes = []
    for i in range(n_episodes):
        episode_id = f"ep{i:04d}"
        if i % 2 == 0:
            topic = TOPICS[int(rng.integers(len(TOPICS)))]
            ask = ASK_TEMPLATES[int(rng.integers(len(ASK_TEMPLATES)))].format(topic=topic)
            knowledge = topic_knowledge(topic, rng)
            turns = []
            if i % 4 == 2:
                greeting, reply = GREETINGS[int(rng.integers(len(GREETINGS)))]
                turns += [DialogueTurn(Speaker.USER, greeting),
                          DialogueTurn(Speaker.BOT, reply)]
            turns += [DialogueTurn(Speaker.USER, ask),
                      DialogueTurn(Speaker.BOT, knowledge)]
            annotations = [TurnAnnotation(
                turn_index=len(turns) - 1,
                needs_retrieval=True,
                gold_query=topic_query(topic),
                gold_knowledge=knowledge,
                gold_response=knowledge,
            )]
        else:
            greeting, reply = GREETINGS[int(rng.integers(len(GREETINGS)))]
            turns = [DialogueTurn(Speaker.USER, greeting),
                     DialogueTurn(Speaker.BOT, reply)]
            annotations = [TurnAnnotation(
                turn_index=1,
                needs_retrieval=False,
                gold_response=reply,
            )]
        episodes.append(Episode(episode_id, turns, annotations))
    return episodes
