"""Self-describing checkpoint container (format id "unirqr-ckpt-v1").

One .npz file holds a JSON meta block (backbone spec, prompt scheme,
vocabulary, training state) plus parameter tensors and, when present,
optimizer moments, so a run can resume exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import BackboneSpec, TinyReferenceModel, build_model
from .prompts import PromptScheme
from .tokenizer import Tokenizer

FORMAT_ID = "unirqr-ckpt-v1"

_PARAM = "p::"
_ADAM_M = "m::"
_ADAM_V = "v::"


class CheckpointFormatError(ValueError):
    pass


@dataclass
class OptimizerState:
    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]


@dataclass
class TrainState:
    epoch: int = 0
    batch_index: int = 0
    step: int = 0
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "batch_index": self.batch_index,
                "step": self.step, "seed": self.seed, "extra": self.extra}

    @classmethod
    def from_dict(cls, data: dict) -> "TrainState":
        return cls(epoch=data.get("epoch", 0), batch_index=data.get("batch_index", 0),
                   step=data.get("step", 0), seed=data.get("seed", 0),
                   extra=data.get("extra", {}))


def save_checkpoint(path: str | Path, model: TinyReferenceModel,
                    optimizer: OptimizerState | None = None,
                    train_state: TrainState | None = None) -> None:
    meta = {
        "format": FORMAT_ID,
        "backbone": model.spec.to_dict(),
        "scheme": model.scheme.to_dict(),
        "vocab": list(model.tokenizer.tokens),
        "model_seed": model.seed,
        "optimizer_step": optimizer.step if optimizer else None,
        "train_state": train_state.to_dict() if train_state else None,
    }
    arrays = {"__meta__": np.frombuffer(
        json.dumps(meta, ensure_ascii=False).encode("utf-8"), dtype=np.uint8)}
    for name, value in model.params.items():
        arrays[_PARAM + name] = value
    if optimizer is not None:
        for name, value in optimizer.m.items():
            arrays[_ADAM_M + name] = value
        for name, value in optimizer.v.items():
            arrays[_ADAM_V + name] = value
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


@dataclass
class LoadedCheckpoint:
    model: TinyReferenceModel
    optimizer: OptimizerState | None
    train_state: TrainState | None
    meta: dict


def load_checkpoint(path: str | Path) -> LoadedCheckpoint:
    with np.load(path, allow_pickle=False) as data:
        if "__meta__" not in data:
            raise CheckpointFormatError(f"{path}: not a recognized checkpoint")
        meta = json.loads(bytes(data["__meta__"]).decode("utf-8"))
        if meta.get("format") != FORMAT_ID:
            raise CheckpointFormatError(
                f"{path}: format {meta.get('format')!r}, expected {FORMAT_ID!r}")
        spec = BackboneSpec.from_dict(meta["backbone"])
        scheme = PromptScheme.from_dict(meta["scheme"])
        tokenizer = Tokenizer.from_tokens(meta["vocab"])
        model = build_model(spec, tokenizer, scheme, seed=meta.get("model_seed", 0))
        params = {}
        m: dict[str, np.ndarray] = {}
        v: dict[str, np.ndarray] = {}
        for key in data.files:
            if key.startswith(_PARAM):
                params[key[len(_PARAM):]] = np.asarray(data[key], dtype=np.float64)
            elif key.startswith(_ADAM_M):
                m[key[len(_ADAM_M):]] = np.asarray(data[key], dtype=np.float64)
            elif key.startswith(_ADAM_V):
                v[key[len(_ADAM_V):]] = np.asarray(data[key], dtype=np.float64)
        model.load_params(params)
        optimizer = None
        if m and meta.get("optimizer_step") is not None:
            optimizer = OptimizerState(step=meta["optimizer_step"], m=m, v=v)
        train_state = (TrainState.from_dict(meta["train_state"])
                       if meta.get("train_state") else None)
        return LoadedCheckpoint(model, optimizer, train_state, meta)
