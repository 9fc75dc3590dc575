"""Text-overlap metrics: unigram F1, sentence BLEU-n, distinct-n, knowledge F1.

Tokenization convention: whitespace tokens for space-delimited text,
character tokens for CJK text (spaces dropped). All scores live in [0, 1].
"""

from __future__ import annotations

from collections import Counter
from math import exp, log
from typing import Sequence

from .types import ContractViolation

_CJK_RANGES = (
    (0x4E00, 0x9FFF),    # CJK unified ideographs
    (0x3400, 0x4DBF),    # extension A
    (0xF900, 0xFAFF),    # compatibility ideographs
    (0x3040, 0x30FF),    # hiragana + katakana
)


def _has_cjk(text: str) -> bool:
    return any(lo <= ord(ch) <= hi for ch in text for lo, hi in _CJK_RANGES)


def metric_tokens(text: str) -> list[str]:
    """Tokenize for scoring: characters for CJK text, whitespace words otherwise."""
    if _has_cjk(text):
        return [ch for ch in text if not ch.isspace()]
    return text.split()


def unigram_f1(hyp: Sequence[str], ref: Sequence[str]) -> float:
    """Multiset unigram overlap F1. Both empty -> 1.0; exactly one empty -> 0.0."""
    if not hyp and not ref:
        return 1.0
    if not hyp or not ref:
        return 0.0
    overlap = sum((Counter(hyp) & Counter(ref)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(hyp)
    recall = overlap / len(ref)
    return 2.0 * precision * recall / (precision + recall)


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu_n(hyp: Sequence[str], ref: Sequence[str], n: int) -> float:
    """Sentence-level BLEU-n (n in {1, 2}) with brevity penalty.

    Modified n-gram precisions are combined by geometric mean; orders above
    1 get add-one smoothing. An empty hypothesis scores 0.
    """
    if n not in (1, 2):
        raise ContractViolation("bleu_n supports n in {1, 2}")
    if not hyp:
        return 0.0
    log_sum = 0.0
    for order in range(1, n + 1):
        hyp_counts = _ngram_counts(hyp, order)
        ref_counts = _ngram_counts(ref, order)
        matches = sum((hyp_counts & ref_counts).values())
        total = sum(hyp_counts.values())
        if order > 1:
            matches += 1
            total += 1
        if matches == 0 or total == 0:
            return 0.0
        log_sum += (1.0 / n) * log(matches / total)
    bp = exp(1.0 - len(ref) / len(hyp)) if len(hyp) < len(ref) else 1.0
    return bp * exp(log_sum)


def distinct_n(hyps: Sequence[Sequence[str]], n: int) -> float:
    """Unique n-grams across all hypotheses over total n-gram count."""
    if n < 1:
        raise ContractViolation("n must be >= 1")
    seen: set[tuple] = set()
    total = 0
    for hyp in hyps:
        for i in range(len(hyp) - n + 1):
            seen.add(tuple(hyp[i:i + n]))
            total += 1
    return len(seen) / total if total else 0.0


def knowledge_f1(response: str, knowledge: str) -> float:
    """Grounding score: unigram F1 of the response against the knowledge string."""
    return unigram_f1(metric_tokens(response), metric_tokens(knowledge))
