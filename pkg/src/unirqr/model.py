"""Desk-scale encoder-decoder backbone with prompt-aware input encoding.

The tiny reference backbone is a pre-LN transformer (sinusoidal positions,
tied input/output embeddings) implemented in numpy with explicit forward
and backward passes, float64 throughout. It stands in for the BART/CPT
class of pretrained encoder-decoders, which plug in through the same
interface as deployment adapters.

Continuous prompts are realized as trainable prefix matrices prepended to
the encoder's input embeddings, one table per input side.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .prompts import PromptScheme, PromptSide, PromptVariety, render_prompt
from .tokenizer import SEP_TOKEN, Tokenizer
from .types import ContractViolation, TaskInstance, TaskKind


class InputTooLongError(ValueError):
    """The input cannot fit max_positions even after context truncation."""


class BackboneUnavailableError(RuntimeError):
    pass


class BackboneKind(str, enum.Enum):
    TINY_REFERENCE = "tiny_reference"
    EXTERNAL_PRETRAINED = "external_pretrained"


@dataclass(frozen=True)
class BackboneSpec:
    kind: BackboneKind = BackboneKind.TINY_REFERENCE
    layers: int = 2
    model_dim: int = 64
    heads: int = 4
    ffn_dim: int = 128
    max_positions: int = 128

    def __post_init__(self):
        if min(self.layers, self.model_dim, self.heads, self.ffn_dim,
               self.max_positions) < 1:
            raise ContractViolation("backbone dimensions must be positive")
        if self.model_dim % self.heads != 0:
            raise ContractViolation("model_dim must be divisible by heads")

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "layers": self.layers,
                "model_dim": self.model_dim, "heads": self.heads,
                "ffn_dim": self.ffn_dim, "max_positions": self.max_positions}

    @classmethod
    def from_dict(cls, data: dict) -> "BackboneSpec":
        return cls(kind=BackboneKind(data.get("kind", "tiny_reference")),
                   layers=int(data.get("layers", 2)),
                   model_dim=int(data.get("model_dim", 64)),
                   heads=int(data.get("heads", 4)),
                   ffn_dim=int(data.get("ffn_dim", 128)),
                   max_positions=int(data.get("max_positions", 128)))


@dataclass(frozen=True)
class EncodedSource:
    """Token ids plus, for continuous prompts, which prefix table to prepend."""

    ids: tuple[int, ...]
    prefix_side: PromptSide | None

    @property
    def total_len(self) -> int:
        return len(self.ids)


@dataclass
class EncoderMemory:
    """Frozen encoder output shared by all decode steps of a batch."""

    states: np.ndarray       # (B, S, d)
    key_valid: np.ndarray    # (B, S) bool

    def tile(self, count: int) -> "EncoderMemory":
        return EncoderMemory(np.repeat(self.states, count, axis=0),
                             np.repeat(self.key_valid, count, axis=0))


def sinusoidal_positions(max_positions: int, dim: int) -> np.ndarray:
    pos = np.arange(max_positions, dtype=np.float64)[:, None]
    i = np.arange((dim + 1) // 2, dtype=np.float64)[None, :]
    angles = pos / np.power(10000.0, 2.0 * i / dim)
    table = np.zeros((max_positions, dim), dtype=np.float64)
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles[:, : dim // 2])
    return table


_NEG = -1e30


def _linear(x2d: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return x2d @ w + b


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    b, s, d = x.shape
    return x.reshape(b, s, heads, d // heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, h, s, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, s, h * dh)


def build_model(spec: BackboneSpec, tokenizer: Tokenizer, scheme: PromptScheme,
                seed: int = 0) -> "TinyReferenceModel":
    if spec.kind is BackboneKind.EXTERNAL_PRETRAINED:
        raise BackboneUnavailableError(
            "external pretrained backbones are deployment adapters and are "
            "not bundled; use kind=tiny_reference")
    return TinyReferenceModel(spec, tokenizer, scheme, seed=seed)


class TinyReferenceModel:
    """Pre-LN transformer encoder-decoder over a whitespace tokenizer."""

    def __init__(self, spec: BackboneSpec, tokenizer: Tokenizer,
                 scheme: PromptScheme, seed: int = 0, init_std: float = 0.02):
        self.spec = spec
        self.tokenizer = tokenizer
        self.scheme = scheme
        self.seed = seed
        self.pos = sinusoidal_positions(spec.max_positions, spec.model_dim)
        self.params: dict[str, np.ndarray] = {}
        self._init_params(np.random.default_rng(seed), init_std)

    # ------------------------------------------------------------------ setup

    def _init_params(self, rng: np.random.Generator, std: float) -> None:
        d, f, v = self.spec.model_dim, self.spec.ffn_dim, len(self.tokenizer)
        p = self.params

        def mat(name, rows, cols):
            p[name] = rng.normal(0.0, std, size=(rows, cols))

        def vec(name, n, value=0.0):
            p[name] = np.full(n, value, dtype=np.float64)

        mat("emb", v, d)
        for stack, blocks in (("enc", ("self",)), ("dec", ("self", "cross"))):
            for layer in range(self.spec.layers):
                base = f"{stack}{layer}"
                for i, block in enumerate(blocks, start=1):
                    vec(f"{base}.ln{i}.g", d, 1.0)
                    vec(f"{base}.ln{i}.b", d)
                    for w in ("wq", "wk", "wv", "wo"):
                        mat(f"{base}.{block}.{w}", d, d)
                    for b in ("bq", "bk", "bv", "bo"):
                        vec(f"{base}.{block}.{b}", d)
                ln_ffn = len(blocks) + 1
                vec(f"{base}.ln{ln_ffn}.g", d, 1.0)
                vec(f"{base}.ln{ln_ffn}.b", d)
                mat(f"{base}.ffn.w1", d, f)
                vec(f"{base}.ffn.b1", f)
                mat(f"{base}.ffn.w2", f, d)
                vec(f"{base}.ffn.b2", d)
            vec(f"{stack}_lnf.g", d, 1.0)
            vec(f"{stack}_lnf.b", d)
        if self.scheme.variety is PromptVariety.CONTINUOUS:
            mat("prompt.query", self.scheme.continuous_length, d)
            mat("prompt.response", self.scheme.continuous_length, d)

    def num_params(self) -> int:
        return sum(a.size for a in self.params.values())

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def load_params(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self.params):
            raise ContractViolation("parameter set mismatch when loading state")
        for k, v in state.items():
            if v.shape != self.params[k].shape:
                raise ContractViolation(f"shape mismatch for parameter {k}")
            self.params[k] = np.asarray(v, dtype=np.float64).copy()

    @property
    def prompt_table_names(self) -> tuple[str, ...]:
        return tuple(n for n in ("prompt.query", "prompt.response") if n in self.params)

    # --------------------------------------------------------------- encoding

    def _prompt_spec(self, kind: TaskKind):
        side = PromptSide.RESPONSE if kind is TaskKind.RG else PromptSide.QUERY
        return side, render_prompt(self.scheme, side)

    def encode_source(self, source: str, kind: TaskKind) -> EncodedSource:
        """Tokenize a rendered source, truncating context head-first to fit.

        The prompt prefix/suffix, separator, and knowledge segment are never
        truncated; if the most recent context turn cannot fit, the input is
        rejected.
        """
        side, spec = self._prompt_spec(kind)
        tok = self.tokenizer
        words = source.split()
        prefix_words = spec.prefix_text.split()
        suffix_words = spec.suffix_text.split()
        if words[: len(prefix_words)] != prefix_words:
            raise ContractViolation("source does not start with the scheme's prompt prefix")
        body = words[len(prefix_words):]
        knowledge_words: list[str] = []
        has_sep = kind is TaskKind.RG
        if has_sep:
            sep_at = body.index(SEP_TOKEN)
            knowledge_words = body[sep_at + 1:]
            body = body[:sep_at]
        if suffix_words:
            if body[-len(suffix_words):] != suffix_words:
                raise ContractViolation("source does not end with the scheme's prompt suffix")
            body = body[: -len(suffix_words)]
        context_words = body

        prefix_ids = tok.encode(" ".join(prefix_words))
        suffix_ids = tok.encode(" ".join(suffix_words))
        context_ids = tok.encode(" ".join(context_words))
        knowledge_ids = tok.encode(" ".join(knowledge_words))
        virtual = spec.virtual_len
        fixed = len(prefix_ids) + len(suffix_ids) + virtual
        if has_sep:
            fixed += 1 + len(knowledge_ids)
        budget = self.spec.max_positions - fixed
        if len(context_ids) > budget:
            floor = len(tok.encode(" ".join(_last_turn_words(context_words))))
            if budget < floor:
                raise InputTooLongError(
                    f"input needs {len(context_ids) + fixed} positions; even the most "
                    f"recent turn does not fit in {self.spec.max_positions}")
            context_ids = context_ids[len(context_ids) - budget:]
        ids = prefix_ids + context_ids + suffix_ids
        if has_sep:
            ids = ids + [tok.ids[SEP_TOKEN]] + knowledge_ids
        prefix_side = side if virtual else None
        return EncodedSource(tuple(ids), prefix_side)

    def encode_input(self, inst: TaskInstance) -> EncodedSource:
        return self.encode_source(inst.source, inst.kind)

    def encode_target(self, target: str) -> list[int]:
        ids = self.tokenizer.encode(target)
        if not ids:
            raise ContractViolation("empty target")
        if len(ids) + 1 > self.spec.max_positions:
            raise InputTooLongError("target exceeds max_positions; targets are never truncated")
        return ids

    # ---------------------------------------------------------------- forward

    def _prefix_stack(self, sides: Sequence[PromptSide | None]) -> np.ndarray | None:
        if self.scheme.variety is not PromptVariety.CONTINUOUS:
            return None
        rows = [self.params["prompt.query" if s is PromptSide.QUERY else "prompt.response"]
                for s in sides]
        return np.stack(rows, axis=0)

    def _encoder_forward(self, src_ids: np.ndarray, sides: Sequence[PromptSide | None]):
        d = self.spec.model_dim
        tok_emb = self.params["emb"][src_ids] * math.sqrt(d)
        prefix = self._prefix_stack(sides)
        valid_tok = src_ids != self.tokenizer.pad_id
        if prefix is not None:
            x = np.concatenate([prefix, tok_emb], axis=1)
            key_valid = np.concatenate(
                [np.ones((x.shape[0], prefix.shape[1]), dtype=bool), valid_tok], axis=1)
        else:
            x = tok_emb
            key_valid = valid_tok
        x = x + self.pos[: x.shape[1]]
        bias = np.where(key_valid[:, None, None, :], 0.0, _NEG)
        cache = {"src_ids": src_ids, "prefix_len": 0 if prefix is None else prefix.shape[1],
                 "key_valid": key_valid, "bias": bias, "layers": []}
        for layer in range(self.spec.layers):
            x = self._block_forward(f"enc{layer}", x, x_mem=None, self_bias=bias,
                                    cache_list=cache["layers"])
        y, mean, rstd = self._ln_forward("enc_lnf", x)
        cache["lnf"] = (x, mean, rstd)
        return EncoderMemory(y, key_valid), cache

    def _decoder_forward(self, dec_ids: np.ndarray, memory: EncoderMemory):
        d = self.spec.model_dim
        t = dec_ids.shape[1]
        x = self.params["emb"][dec_ids] * math.sqrt(d) + self.pos[:t]
        causal = np.where(np.tril(np.ones((t, t), dtype=bool)), 0.0, _NEG)[None, None]
        cross_bias = np.where(memory.key_valid[:, None, None, :], 0.0, _NEG)
        cache = {"dec_ids": dec_ids, "cross_bias": cross_bias, "layers": []}
        for layer in range(self.spec.layers):
            x = self._block_forward(f"dec{layer}", x, x_mem=memory.states,
                                    self_bias=causal, cross_bias=cross_bias,
                                    cache_list=cache["layers"])
        y, mean, rstd = self._ln_forward("dec_lnf", x)
        cache["lnf"] = (x, mean, rstd)
        logits = y @ self.params["emb"].T
        cache["final"] = y
        return logits, cache

    def _ln_forward(self, name: str, x: np.ndarray):
        b, s, d = x.shape
        y2, mean, rstd = kernels.layernorm_forward(
            np.ascontiguousarray(x.reshape(b * s, d)),
            self.params[f"{name}.g"], self.params[f"{name}.b"])
        return y2.reshape(b, s, d), mean, rstd

    def _attn_forward(self, base: str, x_q: np.ndarray, x_kv: np.ndarray,
                      bias: np.ndarray, cache: dict):
        p = self.params
        heads = self.spec.heads
        dh = self.spec.model_dim // heads
        scale = 1.0 / math.sqrt(dh)
        q = _split_heads(x_q @ p[f"{base}.wq"] + p[f"{base}.bq"], heads)
        k = _split_heads(x_kv @ p[f"{base}.wk"] + p[f"{base}.bk"], heads)
        v = _split_heads(x_kv @ p[f"{base}.wv"] + p[f"{base}.bv"], heads)
        scores = np.matmul(q, k.transpose(0, 1, 3, 2)) * scale + bias
        b, h, s, m = scores.shape
        probs = kernels.softmax_rows(
            np.ascontiguousarray(scores.reshape(b * h * s, m))).reshape(b, h, s, m)
        ctx = _merge_heads(np.matmul(probs, v))
        out = ctx @ p[f"{base}.wo"] + p[f"{base}.bo"]
        cache.update(q=q, k=k, v=v, probs=probs, ctx=ctx, x_q=x_q, x_kv=x_kv, scale=scale)
        return out

    def _block_forward(self, base: str, x: np.ndarray, x_mem: np.ndarray | None,
                       self_bias: np.ndarray, cache_list: list,
                       cross_bias: np.ndarray | None = None):
        cache: dict = {"x_in": x}
        ln1, mean1, rstd1 = self._ln_forward(f"{base}.ln1", x)
        cache["ln1"] = (x, mean1, rstd1)
        attn: dict = {}
        x = x + self._attn_forward(f"{base}.self", ln1, ln1, self_bias, attn)
        cache["self"] = attn
        ln_ffn_idx = 2
        if x_mem is not None:
            ln2, mean2, rstd2 = self._ln_forward(f"{base}.ln2", x)
            cache["ln2"] = (x, mean2, rstd2)
            cross: dict = {}
            x = x + self._attn_forward(f"{base}.cross", ln2, x_mem, cross_bias, cross)
            cache["cross"] = cross
            ln_ffn_idx = 3
        lnf, meanf, rstdf = self._ln_forward(f"{base}.ln{ln_ffn_idx}", x)
        cache[f"ln{ln_ffn_idx}"] = (x, meanf, rstdf)
        cache["ln_ffn_idx"] = ln_ffn_idx
        b, s, d = lnf.shape
        h1 = lnf.reshape(b * s, d) @ self.params[f"{base}.ffn.w1"] + self.params[f"{base}.ffn.b1"]
        act = kernels.gelu_forward(h1)
        out = act @ self.params[f"{base}.ffn.w2"] + self.params[f"{base}.ffn.b2"]
        cache["ffn"] = (lnf, h1, act)
        cache_list.append(cache)
        return x + out.reshape(b, s, d)

    # ------------------------------------------------------------------- loss

    def _prepare_batch(self, instances: Sequence[TaskInstance]):
        if not instances:
            raise ContractViolation("empty batch")
        tok = self.tokenizer
        sources = [self.encode_input(inst) for inst in instances]
        targets = [self.encode_target(inst.target) for inst in instances]
        b = len(instances)
        s = max(src.total_len for src in sources)
        t = max(len(ids) for ids in targets) + 1
        src_ids = np.full((b, s), tok.pad_id, dtype=np.int64)
        dec_ids = np.full((b, t), tok.pad_id, dtype=np.int64)
        labels = np.full((b, t), tok.pad_id, dtype=np.int64)
        for i, (src, tgt) in enumerate(zip(sources, targets)):
            src_ids[i, : len(src.ids)] = src.ids
            dec_ids[i, 0] = tok.bos_id
            dec_ids[i, 1: 1 + len(tgt)] = tgt
            labels[i, : len(tgt)] = tgt
            labels[i, len(tgt)] = tok.eos_id
        sides = [src.prefix_side for src in sources]
        return src_ids, sides, dec_ids, labels

    def _forward_full(self, instances: Sequence[TaskInstance]):
        src_ids, sides, dec_ids, labels = self._prepare_batch(instances)
        memory, enc_cache = self._encoder_forward(src_ids, sides)
        logits, dec_cache = self._decoder_forward(dec_ids, memory)
        b, t, v = logits.shape
        flat_labels = labels.reshape(b * t)
        row_losses, probs = kernels.cross_entropy_forward(
            np.ascontiguousarray(logits.reshape(b * t, v)), flat_labels,
            self.tokenizer.pad_id)
        valid = (labels != self.tokenizer.pad_id)
        n_tokens = valid.sum(axis=1)
        losses = row_losses.reshape(b, t).sum(axis=1) / n_tokens
        cache = {"src_ids": src_ids, "sides": sides, "dec_ids": dec_ids,
                 "labels": labels, "memory": memory, "enc": enc_cache,
                 "dec": dec_cache, "probs": probs, "n_tokens": n_tokens}
        return losses, cache

    def forward_loss(self, instances: Sequence[TaskInstance]) -> np.ndarray:
        """Per-instance token-mean cross-entropy (teacher forcing, pad excluded)."""
        return self._forward_full(instances)[0]

    def loss_and_grads(self, instances: Sequence[TaskInstance],
                       instance_weights: Sequence[float]):
        """Losses plus d(sum_i w_i * loss_i)/d(params) for every parameter."""
        losses, cache = self._forward_full(instances)
        grads = self._backward(cache, np.asarray(instance_weights, dtype=np.float64))
        return losses, grads

    # --------------------------------------------------------------- backward

    def _backward(self, cache: dict, instance_weights: np.ndarray) -> dict[str, np.ndarray]:
        p = self.params
        grads = {name: np.zeros_like(arr) for name, arr in p.items()}
        d = self.spec.model_dim
        labels = cache["labels"]
        b, t = labels.shape
        v = len(self.tokenizer)
        row_scale = (instance_weights / cache["n_tokens"])[:, None] * np.ones((b, t))
        row_scale = np.ascontiguousarray(row_scale.reshape(b * t))
        dlogits = kernels.cross_entropy_backward(
            cache["probs"], labels.reshape(b * t), row_scale, self.tokenizer.pad_id)

        final = cache["dec"]["final"].reshape(b * t, d)
        grads["emb"] += dlogits.T @ final
        dfinal = (dlogits @ p["emb"]).reshape(b, t, d)

        dx = self._ln_backward("dec_lnf", dfinal, cache["dec"]["lnf"], grads)
        dmemory = np.zeros_like(cache["memory"].states)
        for layer in reversed(range(self.spec.layers)):
            dx, dmem = self._block_backward(f"dec{layer}", dx,
                                            cache["dec"]["layers"][layer], grads)
            dmemory += dmem
        demb_dec = dx * math.sqrt(d)
        np.add.at(grads["emb"], cache["dec_ids"].reshape(-1),
                  demb_dec.reshape(b * t, d))

        dx = self._ln_backward("enc_lnf", dmemory, cache["enc"]["lnf"], grads)
        for layer in reversed(range(self.spec.layers)):
            dx, _ = self._block_backward(f"enc{layer}", dx,
                                         cache["enc"]["layers"][layer], grads)
        prefix_len = cache["enc"]["prefix_len"]
        if prefix_len:
            dprefix = dx[:, :prefix_len]
            for i, side in enumerate(cache["sides"]):
                name = "prompt.query" if side is PromptSide.QUERY else "prompt.response"
                grads[name] += dprefix[i]
            dx = dx[:, prefix_len:]
        src_ids = cache["src_ids"]
        demb_enc = dx * math.sqrt(d)
        np.add.at(grads["emb"], src_ids.reshape(-1),
                  demb_enc.reshape(src_ids.size, d))
        return grads

    def _ln_backward(self, name: str, dy: np.ndarray, ln_cache, grads: dict) -> np.ndarray:
        x, mean, rstd = ln_cache
        b, s, d = dy.shape
        dx2, dg, db = kernels.layernorm_backward(
            np.ascontiguousarray(dy.reshape(b * s, d)),
            np.ascontiguousarray(x.reshape(b * s, d)),
            self.params[f"{name}.g"], mean, rstd)
        grads[f"{name}.g"] += dg
        grads[f"{name}.b"] += db
        return dx2.reshape(b, s, d)

    def _attn_backward(self, base: str, dout: np.ndarray, cache: dict, grads: dict):
        p = self.params
        heads = self.spec.heads
        b, s, d = dout.shape
        ctx2 = cache["ctx"].reshape(b * s, d)
        dout2 = dout.reshape(b * s, d)
        grads[f"{base}.wo"] += ctx2.T @ dout2
        grads[f"{base}.bo"] += dout2.sum(axis=0)
        dctx = _split_heads((dout2 @ p[f"{base}.wo"].T).reshape(b, s, d), heads)
        probs, q, k, v = cache["probs"], cache["q"], cache["k"], cache["v"]
        dprobs = np.matmul(dctx, v.transpose(0, 1, 3, 2))
        dv = np.matmul(probs.transpose(0, 1, 3, 2), dctx)
        bh, m = b * heads * s, probs.shape[3]
        dscores = kernels.softmax_backward_rows(
            np.ascontiguousarray(probs.reshape(bh, m)),
            np.ascontiguousarray(dprobs.reshape(bh, m))).reshape(probs.shape)
        dscores *= cache["scale"]
        dq = np.matmul(dscores, k)
        dk = np.matmul(dscores.transpose(0, 1, 3, 2), q)
        x_q2 = cache["x_q"].reshape(b * s, d)
        m_len = cache["x_kv"].shape[1]
        x_kv2 = cache["x_kv"].reshape(b * m_len, d)
        dq2 = _merge_heads(dq).reshape(b * s, d)
        dk2 = _merge_heads(dk).reshape(b * m_len, d)
        dv2 = _merge_heads(dv).reshape(b * m_len, d)
        grads[f"{base}.wq"] += x_q2.T @ dq2
        grads[f"{base}.bq"] += dq2.sum(axis=0)
        grads[f"{base}.wk"] += x_kv2.T @ dk2
        grads[f"{base}.bk"] += dk2.sum(axis=0)
        grads[f"{base}.wv"] += x_kv2.T @ dv2
        grads[f"{base}.bv"] += dv2.sum(axis=0)
        dx_q = (dq2 @ p[f"{base}.wq"].T).reshape(b, s, d)
        dx_kv = (dk2 @ p[f"{base}.wk"].T + dv2 @ p[f"{base}.wv"].T).reshape(b, m_len, d)
        return dx_q, dx_kv

    def _block_backward(self, base: str, dout: np.ndarray, cache: dict, grads: dict):
        p = self.params
        b, s, d = dout.shape
        ln_ffn_idx = cache["ln_ffn_idx"]
        lnf, h1, act = cache["ffn"]
        dffn_out2 = dout.reshape(b * s, d)
        grads[f"{base}.ffn.w2"] += act.T @ dffn_out2
        grads[f"{base}.ffn.b2"] += dffn_out2.sum(axis=0)
        dact = dffn_out2 @ p[f"{base}.ffn.w2"].T
        dh1 = kernels.gelu_backward(h1, np.ascontiguousarray(dact))
        lnf2 = lnf.reshape(b * s, d)
        grads[f"{base}.ffn.w1"] += lnf2.T @ dh1
        grads[f"{base}.ffn.b1"] += dh1.sum(axis=0)
        dlnf = (dh1 @ p[f"{base}.ffn.w1"].T).reshape(b, s, d)
        dx = dout + self._ln_backward(f"{base}.ln{ln_ffn_idx}", dlnf,
                                      cache[f"ln{ln_ffn_idx}"], grads)
        dmem = None
        if "cross" in cache:
            dattn_q, dattn_kv = self._attn_backward(f"{base}.cross", dx,
                                                    cache["cross"], grads)
            dmem = dattn_kv
            dx = dx + self._ln_backward(f"{base}.ln2", dattn_q, cache["ln2"], grads)
        dattn_q, dattn_kv = self._attn_backward(f"{base}.self", dx, cache["self"], grads)
        dln1 = dattn_q + dattn_kv
        dx = dx + self._ln_backward(f"{base}.ln1", dln1, cache["ln1"], grads)
        return dx, dmem

    # ------------------------------------------------------------- generation

    def encoder_memory(self, sources: Sequence[EncodedSource]) -> EncoderMemory:
        b = len(sources)
        s = max(src.total_len for src in sources)
        src_ids = np.full((b, s), self.tokenizer.pad_id, dtype=np.int64)
        for i, src in enumerate(sources):
            src_ids[i, : len(src.ids)] = src.ids
        memory, _ = self._encoder_forward(src_ids, [src.prefix_side for src in sources])
        return memory

    def decoder_logits(self, dec_ids: np.ndarray, memory: EncoderMemory) -> np.ndarray:
        """(B, T, V) logits for explicit decoder input ids; no caching."""
        logits, _ = self._decoder_forward(np.asarray(dec_ids, dtype=np.int64), memory)
        return logits


def _last_turn_words(context_words: list[str]) -> list[str]:
    last_boundary = -1
    for i, word in enumerate(context_words):
        if word.endswith(";"):
            last_boundary = i
    return context_words[last_boundary + 1:]
