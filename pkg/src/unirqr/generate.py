"""Greedy, beam, and seeded sampling decoders over a frozen model snapshot."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .model import EncodedSource, EncoderMemory
from .types import ContractViolation


class DecodingStrategy(str, enum.Enum):
    GREEDY = "greedy"
    BEAM = "beam"
    SAMPLE = "sample"


@dataclass(frozen=True)
class DecodingConfig:
    strategy: DecodingStrategy = DecodingStrategy.GREEDY
    max_new_tokens: int = 32
    beam_size: int = 4
    temperature: float = 1.0
    seed: int = 0
    length_penalty: float = 0.0
    banned_first_ids: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.max_new_tokens < 0:
            raise ContractViolation("max_new_tokens must be >= 0")
        if self.strategy is DecodingStrategy.BEAM and self.beam_size < 1:
            raise ContractViolation("beam_size must be >= 1")
        if self.strategy is DecodingStrategy.SAMPLE and self.temperature <= 0:
            raise ContractViolation("temperature must be > 0 when sampling")

    def to_dict(self) -> dict:
        return {"strategy": self.strategy.value, "max_new_tokens": self.max_new_tokens,
                "beam_size": self.beam_size, "temperature": self.temperature,
                "seed": self.seed, "length_penalty": self.length_penalty}

    @classmethod
    def from_dict(cls, data: dict) -> "DecodingConfig":
        return cls(strategy=DecodingStrategy(data.get("strategy", "greedy")),
                   max_new_tokens=int(data.get("max_new_tokens", 32)),
                   beam_size=int(data.get("beam_size", 4)),
                   temperature=float(data.get("temperature", 1.0)),
                   seed=int(data.get("seed", 0)),
                   length_penalty=float(data.get("length_penalty", 0.0)))


def generate(model, source: EncodedSource, cfg: DecodingConfig) -> list[int]:
    """Decode new token ids for one encoded source; stops at <eos>."""
    if cfg.max_new_tokens == 0:
        return []
    memory = model.encoder_memory([source])
    if cfg.strategy is DecodingStrategy.BEAM:
        return _beam(model, memory, cfg)
    if cfg.strategy is DecodingStrategy.SAMPLE:
        return _sample(model, memory, cfg)
    return _greedy(model, memory, cfg)


def generate_text(model, source: EncodedSource, cfg: DecodingConfig) -> str:
    return model.tokenizer.decode(generate(model, source, cfg))


def _step_logits(model, memory: EncoderMemory, prefix_ids: list[list[int]]) -> np.ndarray:
    dec = np.asarray(prefix_ids, dtype=np.int64)
    logits = model.decoder_logits(dec, memory)
    return logits[:, -1, :]


def _apply_first_step_bans(logits: np.ndarray, cfg: DecodingConfig, step: int) -> np.ndarray:
    if step == 0 and cfg.banned_first_ids:
        logits = logits.copy()
        logits[..., list(cfg.banned_first_ids)] = -np.inf
    return logits


def _greedy(model, memory: EncoderMemory, cfg: DecodingConfig) -> list[int]:
    tok = model.tokenizer
    out: list[int] = []
    dec = [tok.bos_id]
    for step in range(cfg.max_new_tokens):
        logits = _apply_first_step_bans(_step_logits(model, memory, [dec])[0], cfg, step)
        next_id = int(np.argmax(logits))
        if next_id == tok.eos_id:
            break
        out.append(next_id)
        dec.append(next_id)
    return out


def _sample(model, memory: EncoderMemory, cfg: DecodingConfig) -> list[int]:
    tok = model.tokenizer
    rng = np.random.default_rng(cfg.seed)
    out: list[int] = []
    dec = [tok.bos_id]
    for step in range(cfg.max_new_tokens):
        logits = _apply_first_step_bans(_step_logits(model, memory, [dec])[0], cfg, step)
        scaled = logits / cfg.temperature
        scaled -= scaled.max()
        probs = np.exp(scaled)
        probs /= probs.sum()
        next_id = int(rng.choice(len(probs), p=probs))
        if next_id == tok.eos_id:
            break
        out.append(next_id)
        dec.append(next_id)
    return out


def _beam(model, memory: EncoderMemory, cfg: DecodingConfig) -> list[int]:
    tok = model.tokenizer
    k = cfg.beam_size
    live: list[tuple[float, list[int]]] = [(0.0, [tok.bos_id])]
    finished: list[tuple[float, list[int]]] = []

    def rank(score: float, length: int) -> float:
        norm = max(1, length) ** cfg.length_penalty
        return score / norm

    for step in range(cfg.max_new_tokens):
        if not live:
            break
        mem = memory.tile(len(live))
        logits = _step_logits(model, mem, [ids for _, ids in live])
        logits = _apply_first_step_bans(logits, cfg, step)
        shifted = logits - logits.max(axis=1, keepdims=True)
        logprobs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        candidates: list[tuple[float, list[int], int]] = []
        for (score, ids), row in zip(live, logprobs):
            top = np.argsort(-row, kind="stable")[: 2 * k]
            for token_id in top:
                candidates.append((score + float(row[token_id]), ids, int(token_id)))
        candidates.sort(key=lambda c: -c[0])
        next_live: list[tuple[float, list[int]]] = []
        for score, ids, token_id in candidates:
            if token_id == tok.eos_id:
                finished.append((score, ids))
            else:
                next_live.append((score, ids + [token_id]))
            if len(next_live) >= k:
                break
        live = next_live
        if finished and len(finished) >= k:
            break
    pool = finished + live
    best = max(pool, key=lambda c: rank(c[0], len(c[1]) - 1))
    return best[1][1:]
