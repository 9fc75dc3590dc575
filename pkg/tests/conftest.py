"""Shared fixtures: micro models for unit tests, one overfit run for e2e tests."""

import json
import subprocess
import sys
import time
from pathlib import Path

import pytest

from unirqr.checkpoint import load_checkpoint
from unirqr.corpus import expand_corpus, save_corpus
from unirqr.model import BackboneSpec, build_model
from unirqr.prompts import PromptScheme, PromptVariety
from unirqr.synthetic import make_synthetic_corpus
from unirqr.tokenizer import Tokenizer
from unirqr.training import TrainConfig, train
from unirqr.types import LossWeights, TaskInstance, TaskKind

MICRO_TEXTS = [
    "user: tell me about amber; bot: amber is bright",
    "user: hello there; bot: hi friend",
    "user: what do you know about kelp",
    "amber facts", "kelp facts", "No Query",
    "amber is bright and warm", "kelp is vast", "hi friend how are you",
    "Please generate a short query for this conversation:",
    "Please generate a response for the bot to reply the user:",
]

MICRO_SPEC = BackboneSpec(layers=2, model_dim=16, heads=2, ffn_dim=32, max_positions=64)


def make_micro_model(variety=PromptVariety.SPECIAL_TOKEN, seed=3,
                     continuous_length=4, spec=MICRO_SPEC):
    tokenizer = Tokenizer.build(MICRO_TEXTS)
    scheme = PromptScheme(variety=variety, continuous_length=continuous_length)
    return build_model(spec, tokenizer, scheme, seed=seed)


def micro_instances(scheme: PromptScheme) -> list[TaskInstance]:
    from unirqr.prompts import PromptSide, render_source

    ctx_q = "user: tell me about amber"
    ctx_c = "user: hello there"
    return [
        TaskInstance("e1", 1, TaskKind.QG,
                     render_source(scheme, PromptSide.QUERY, ctx_q), "amber facts", True),
        TaskInstance("e1", 1, TaskKind.RG,
                     render_source(scheme, PromptSide.RESPONSE, ctx_q, "amber is bright"),
                     "amber is bright", True),
        TaskInstance("e2", 1, TaskKind.RD,
                     render_source(scheme, PromptSide.QUERY, ctx_c), "No Query", False),
        TaskInstance("e2", 1, TaskKind.RG,
                     render_source(scheme, PromptSide.RESPONSE, ctx_c, ""),
                     "hi friend", False),
    ]


@pytest.fixture(scope="session")
def synth_episodes():
    return make_synthetic_corpus(200, seed=13)


@pytest.fixture(scope="session")
def synth_corpus_path(tmp_path_factory, synth_episodes):
    path = tmp_path_factory.mktemp("data") / "synth.jsonl"
    save_corpus(synth_episodes, path)
    return path


def overfit_run_config(corpus_path: Path, out_dir: Path) -> dict:
    return {
        "version": 1,
        "corpus": {"path": str(corpus_path), "style": "multi_turn",
                   "max_context_turns": 5, "seed": 13},
        "prompts": {"variety": "special_token"},
        "model": {"kind": "tiny_reference", "layers": 2, "model_dim": 64,
                  "heads": 4, "ffn_dim": 128, "max_positions": 96},
        "train": {"alpha": 1.0, "beta": 1.0, "gamma": 1.0,
                  "learning_rate": 3e-3, "batch_size": 16, "epochs": 30,
                  "seed": 7, "grad_clip": 1.0, "checkpoint_every": 0,
                  "warmup_steps": 50, "weight_decay": 0.01,
                  "ablation": "full", "out_dir": str(out_dir)},
    }


@pytest.fixture(scope="session")
def overfit_run(tmp_path_factory, synth_corpus_path):
    """Train the shared overfit model through the CLI; reused across e2e tests."""
    out_dir = tmp_path_factory.mktemp("overfit")
    config_path = out_dir / "config.json"
    config_path.write_text(json.dumps(overfit_run_config(synth_corpus_path, out_dir)))
    started = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "unirqr", "train", str(config_path)],
        capture_output=True, text=True)
    elapsed = time.perf_counter() - started
    assert proc.returncode == 0, proc.stderr
    return {
        "checkpoint": out_dir / "final.npz",
        "metrics_log": out_dir / "metrics.jsonl",
        "corpus_path": synth_corpus_path,
        "config_path": config_path,
        "elapsed_s": elapsed,
        "stdout": proc.stdout,
    }


@pytest.fixture(scope="session")
def overfit_model(overfit_run):
    return load_checkpoint(overfit_run["checkpoint"]).model


@pytest.fixture(scope="session")
def trained_continuous_model(tmp_path_factory):
    """A small continuous-prompt model overfit on a 30-episode corpus (seed 21)."""
    episodes = make_synthetic_corpus(30, seed=21)
    scheme = PromptScheme(variety=PromptVariety.CONTINUOUS, continuous_length=10)
    instances = expand_corpus(episodes, scheme)
    tokenizer = Tokenizer.build([i.source for i in instances] +
                                [i.target for i in instances])
    spec = BackboneSpec(layers=2, model_dim=48, heads=4, ffn_dim=96, max_positions=96)
    model = build_model(spec, tokenizer, scheme, seed=11)
    cfg = TrainConfig(weights=LossWeights(), learning_rate=3e-3, batch_size=16,
                      epochs=40, seed=11, warmup_steps=30)
    train(model, instances, cfg, tmp_path_factory.mktemp("continuous"))
    return model
