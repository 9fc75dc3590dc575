"""UniRQR: one encoder-decoder for retrieval decision, query, and response.

A prompt-conditioned multi-task dialogue system: the same model decides
whether a turn needs external knowledge (by generating the "No Query"
sentinel or a real search query) and generates the knowledge-grounded
response, wrapped in ingest / train / retrieve / respond / evaluate
tooling plus a live chat service.
"""

__version__ = "0.1.0"

from .types import (  # noqa: F401
    ABLATIONS,
    AblationConfig,
    Decision,
    DialogueTurn,
    Episode,
    LossWeights,
    Speaker,
    TaskInstance,
    TaskKind,
    TurnAnnotation,
    validate_episode,
)
from .prompts import PromptScheme, PromptVariety, parse_decision  # noqa: F401
from .generate import DecodingConfig, DecodingStrategy  # noqa: F401
from .checkpoint import load_checkpoint, save_checkpoint  # noqa: F401
