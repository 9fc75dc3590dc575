"""Whitespace tokenizer with character fallback and reserved control tokens.

The vocabulary is built from the training corpus, so every corpus string
round-trips exactly (modulo whitespace normalization). Out-of-vocabulary
words fall back to per-character tokens; continuation characters carry a
"##" marker so decoding can rejoin them without spaces. Characters unseen
at build time become <unk>.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

PAD = "<pad>"
BOS = "<bos>"
EOS = "<eos>"
UNK = "<unk>"
QG_TOKEN = "<QG>"
RG_TOKEN = "<RG>"
SEP_TOKEN = "[SEP]"

RESERVED = (PAD, BOS, EOS, UNK, QG_TOKEN, RG_TOKEN, SEP_TOKEN)

_CONT = "##"


class UnknownTokenError(KeyError):
    pass


@dataclass(frozen=True)
class Tokenizer:
    tokens: tuple[str, ...]
    ids: dict[str, int]

    @classmethod
    def build(cls, texts: Iterable[str]) -> "Tokenizer":
        """Build a vocabulary covering every word and character in `texts`."""
        words: set[str] = set()
        chars: set[str] = set()
        for text in texts:
            for word in text.split():
                words.add(word)
                chars.update(word)
        words.difference_update(RESERVED)
        ordered = list(RESERVED)
        ordered.extend(sorted(words))
        seen = set(ordered)
        for ch in sorted(chars):
            if ch not in seen:
                ordered.append(ch)
                seen.add(ch)
        for ch in sorted(chars):
            marked = _CONT + ch
            if marked not in seen:
                ordered.append(marked)
                seen.add(marked)
        return cls.from_tokens(ordered)

    @classmethod
    def from_tokens(cls, tokens: Sequence[str]) -> "Tokenizer":
        tokens = tuple(tokens)
        if tokens[: len(RESERVED)] != RESERVED:
            raise ValueError("vocabulary must start with the reserved tokens")
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary contains duplicate tokens")
        return cls(tokens, {t: i for i, t in enumerate(tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def pad_id(self) -> int:
        return self.ids[PAD]

    @property
    def bos_id(self) -> int:
        return self.ids[BOS]

    @property
    def eos_id(self) -> int:
        return self.ids[EOS]

    @property
    def unk_id(self) -> int:
        return self.ids[UNK]

    def encode(self, text: str) -> list[int]:
        """Whitespace-token ids; OOV words fall back to characters."""
        out: list[int] = []
        for word in text.split():
            idx = self.ids.get(word)
            if idx is not None:
                out.append(idx)
                continue
            for pos, ch in enumerate(word):
                key = ch if pos == 0 else _CONT + ch
                out.append(self.ids.get(key, self.unk_id))
        return out

    def decode(self, ids: Iterable[int], skip_special: bool = True) -> str:
        """Inverse of encode; <pad>/<bos>/<eos> are dropped when skip_special."""
        skip = {self.pad_id, self.bos_id, self.eos_id} if skip_special else set()
        parts: list[str] = []
        for idx in ids:
            if idx in skip:
                continue
            token = self.tokens[idx]
            if token.startswith(_CONT) and len(token) > len(_CONT) and parts:
                parts[-1] += token[len(_CONT):]
            else:
                parts.append(token)
        return " ".join(parts)
