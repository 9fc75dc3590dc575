"""Multi-task optimization: weighted sum of per-task mean losses.

The total objective is alpha * L_rd + beta * L_qg + gamma * L_rg, where
each term is the batch mean of that task's per-instance token-mean
cross-entropies. Instances whose task weight is exactly zero contribute
nothing mathematically, so they are excluded from the gradient pass (their
losses are still computed forward-only for the log); this makes a
zero-weight run bit-identical to one with those instances removed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .checkpoint import OptimizerState, TrainState, save_checkpoint
from .corpus import BatchStream
from .model import TinyReferenceModel
from .types import ContractViolation, LossWeights, TaskInstance, TaskKind


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss; the last good checkpoint is kept."""

    def __init__(self, step: int, last_checkpoint: str | None):
        super().__init__(f"non-finite loss at step {step}")
        self.step = step
        self.last_checkpoint = last_checkpoint


@dataclass(frozen=True)
class TrainConfig:
    weights: LossWeights = field(default_factory=LossWeights)
    learning_rate: float = 2e-5
    batch_size: int = 8
    epochs: int = 1
    seed: int = 0
    grad_clip: float = 1.0
    checkpoint_every: int = 0
    warmup_steps: int = 100
    weight_decay: float = 0.01

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ContractViolation("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ContractViolation("batch_size must be >= 1")
        if self.epochs < 0:
            raise ContractViolation("epochs must be >= 0")


@dataclass(frozen=True)
class WeightedLoss:
    total: float
    per_task: dict[TaskKind, float]


def compute_weighted_loss(per_instance_losses: Sequence[float],
                          kinds: Sequence[TaskKind],
                          weights: LossWeights) -> WeightedLoss:
    """Per-task batch means and their weighted sum; absent tasks are omitted."""
    if len(per_instance_losses) != len(kinds):
        raise ContractViolation("losses and kinds must align")
    if not kinds:
        raise ContractViolation("cannot compute a loss over an empty batch")
    buckets: dict[TaskKind, list[float]] = {}
    for loss, kind in zip(per_instance_losses, kinds):
        buckets.setdefault(kind, []).append(float(loss))
    per_task = {kind: sum(vals) / len(vals) for kind, vals in buckets.items()}
    total = sum(weights.for_kind(kind) * mean for kind, mean in per_task.items())
    return WeightedLoss(total=total, per_task=per_task)


class AdamW:
    """Decoupled-weight-decay Adam; decay applies to matrices only."""

    def __init__(self, params: dict[str, np.ndarray], lr: float,
                 weight_decay: float = 0.01, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray], lr_scale: float = 1.0) -> None:
        self.step_count += 1
        bc1 = 1.0 - self.b1 ** self.step_count
        bc2 = 1.0 - self.b2 ** self.step_count
        lr = self.lr * lr_scale
        for name in sorted(self.params):
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay and self.params[name].ndim >= 2:
                update = update + self.weight_decay * self.params[name]
            self.params[name] -= lr * update

    def state(self) -> OptimizerState:
        return OptimizerState(step=self.step_count,
                              m={k: v.copy() for k, v in self.m.items()},
                              v={k: v.copy() for k, v in self.v.items()})

    def load_state(self, state: OptimizerState) -> None:
        self.step_count = state.step
        for k in self.params:
            self.m[k] = state.m[k].copy()
            self.v[k] = state.v[k].copy()


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


@dataclass
class StepRecord:
    step: int
    per_task: dict[TaskKind, float]
    total: float
    lr: float

    def to_json(self) -> str:
        row = {"step": self.step,
               "l_rd": self.per_task.get(TaskKind.RD),
               "l_qg": self.per_task.get(TaskKind.QG),
               "l_rg": self.per_task.get(TaskKind.RG),
               "total": self.total, "lr": self.lr}
        return json.dumps(row)


@dataclass
class TrainResult:
    steps: int
    history: list[StepRecord]
    checkpoints: list[str]
    final_checkpoint: str | None


def train(model: TinyReferenceModel, instances: Sequence[TaskInstance],
          cfg: TrainConfig, out_dir: str | Path,
          resume_optimizer: OptimizerState | None = None,
          resume_state: TrainState | None = None,
          log_fn: Callable[[StepRecord], None] | None = None) -> TrainResult:
    """Run the multi-task loop, logging per-step task losses and checkpointing.

    Checkpoints land in out_dir (step-N.npz plus final.npz); the metrics log
    is out_dir/metrics.jsonl (appended when resuming).
    """
    if not instances:
        raise ContractViolation("cannot train on an empty instance stream")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stream = BatchStream(instances, cfg.batch_size, cfg.seed)
    optimizer = AdamW(model.params, lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    if resume_optimizer is not None:
        optimizer.load_state(resume_optimizer)
    state = TrainState(seed=cfg.seed) if resume_state is None else resume_state
    start_epoch, start_batch = state.epoch, state.batch_index
    step = state.step

    history: list[StepRecord] = []
    checkpoints: list[str] = []
    log_path = out_dir / "metrics.jsonl"
    log_mode = "a" if resume_state is not None else "w"

    def save(tag: str) -> str:
        path = out_dir / f"{tag}.npz"
        save_checkpoint(path, model, optimizer.state(),
                        TrainState(epoch=state.epoch, batch_index=state.batch_index,
                                   step=step, seed=cfg.seed))
        checkpoints.append(str(path))
        return str(path)

    if resume_state is None:
        save("step-0")

    with open(log_path, log_mode, encoding="utf-8") as log:
        for epoch in range(start_epoch, cfg.epochs):
            batches = stream.epoch_batches(epoch)
            first = start_batch if epoch == start_epoch else 0
            for batch_index in range(first, len(batches)):
                batch = batches[batch_index]
                grad_insts = [i for i in batch if cfg.weights.for_kind(i.kind) > 0]
                side_insts = [i for i in batch if cfg.weights.for_kind(i.kind) == 0]

                counts: dict[TaskKind, int] = {}
                for inst in grad_insts:
                    counts[inst.kind] = counts.get(inst.kind, 0) + 1
                losses_all: list[float] = []
                kinds_all: list[TaskKind] = []
                if grad_insts:
                    inst_weights = [cfg.weights.for_kind(i.kind) / counts[i.kind]
                                    for i in grad_insts]
                    losses, grads = model.loss_and_grads(grad_insts, inst_weights)
                    losses_all.extend(losses.tolist())
                    kinds_all.extend(i.kind for i in grad_insts)
                else:
                    grads = None
                if side_insts:
                    side_losses = model.forward_loss(side_insts)
                    losses_all.extend(side_losses.tolist())
                    kinds_all.extend(i.kind for i in side_insts)

                weighted = compute_weighted_loss(losses_all, kinds_all, cfg.weights)
                step += 1
                state.epoch, state.batch_index, state.step = epoch, batch_index + 1, step

                if not math.isfinite(weighted.total):
                    raise DivergenceError(step, checkpoints[-1] if checkpoints else None)

                lr_scale = min(1.0, step / cfg.warmup_steps) if cfg.warmup_steps else 1.0
                if grads is not None:
                    clip_global_norm(grads, cfg.grad_clip)
                    optimizer.step(grads, lr_scale)

                record = StepRecord(step=step, per_task=weighted.per_task,
                                    total=weighted.total, lr=cfg.learning_rate * lr_scale)
                history.append(record)
                log.write(record.to_json() + "\n")
                if log_fn:
                    log_fn(record)
                if cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
                    save(f"step-{step}")
            state.epoch, state.batch_index = epoch + 1, 0

    if cfg.epochs == 0 and resume_state is None:
        final = checkpoints[-1]
    else:
        final = save("final")
    return TrainResult(steps=step, history=history, checkpoints=checkpoints,
                       final_checkpoint=final)
