"""Single entry point: validate / synth / train / evaluate / ablate / chat / serve.

All workflows are driven by a versioned JSON run config (see
`default_run_config`); every source of randomness is seeded from the
config or the --seed flag.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import kernels
from .checkpoint import load_checkpoint
from .corpus import (
    CorpusConfig,
    CorpusFormatError,
    CorpusStyle,
    episode_from_dict,
    expand_corpus,
    load_corpus,
    save_corpus,
)
from .evalsuite import (
    EvalMode,
    generate_predictions,
    render_ablation_text,
    render_report_text,
    run_ablation_matrix,
    score_records,
    write_predictions,
    write_report,
)
from .generate import DecodingConfig, DecodingStrategy
from .model import BackboneSpec, build_model
from .pipeline import ForceMode, respond
from .prompts import PromptScheme
from .retrieval import HttpRetriever, HttpRetrieverConfig, MockRetriever
from .service import ChatService, ServiceConfig, SessionStore, start_server
from .synthetic import make_synthetic_corpus
from .tokenizer import Tokenizer
from .training import TrainConfig, train
from .types import ABLATIONS, LOSS_WEIGHT_PRESETS, LossWeights, Speaker, validate_episode
from .types import DialogueTurn

CONFIG_VERSION = 1


def default_run_config() -> dict:
    return {
        "version": CONFIG_VERSION,
        "corpus": {"path": "corpus.jsonl", "style": "multi_turn",
                   "max_context_turns": 5, "seed": 13},
        "prompts": {"variety": "special_token", "continuous_length": 10},
        "model": {"kind": "tiny_reference", "layers": 2, "model_dim": 64,
                  "heads": 4, "ffn_dim": 128, "max_positions": 128},
        "train": {"preset": None, "alpha": 1.0, "beta": 1.0, "gamma": 1.0,
                  "learning_rate": 2e-5, "batch_size": 8, "epochs": 1,
                  "seed": 13, "grad_clip": 1.0, "checkpoint_every": 0,
                  "warmup_steps": 100, "weight_decay": 0.01,
                  "ablation": "full", "out_dir": "run"},
        "retriever": {"backend": "mock", "endpoint": None,
                      "items_path": "results[*]", "text_path": "text",
                      "source_path": "id", "timeout_s": 3.0, "limit": 3},
        "eval": {"strategy": "greedy", "max_new_tokens": 24, "beam_size": 4,
                 "knowledge_budget_tokens": 64},
    }


def load_run_config(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        user = json.load(fh)
    version = user.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise SystemExit(f"unsupported config version {version}, expected {CONFIG_VERSION}")
    merged = default_run_config()
    for section, values in user.items():
        if isinstance(values, dict):
            merged.setdefault(section, {}).update(values)
        else:
            merged[section] = values
    return merged


def _corpus_config(section: dict) -> CorpusConfig:
    return CorpusConfig(path=section["path"],
                        style=CorpusStyle(section.get("style", "multi_turn")),
                        max_context_turns=int(section.get("max_context_turns", 5)),
                        seed=int(section.get("seed", 0)))


def _decoding_config(section: dict, seed: int | None = None) -> DecodingConfig:
    return DecodingConfig(
        strategy=DecodingStrategy(section.get("strategy", "greedy")),
        max_new_tokens=int(section.get("max_new_tokens", 24)),
        beam_size=int(section.get("beam_size", 4)),
        temperature=float(section.get("temperature", 1.0)),
        seed=int(section.get("seed", 0) if seed is None else seed))


def _loss_weights(section: dict) -> LossWeights:
    preset = section.get("preset")
    if preset:
        if preset not in LOSS_WEIGHT_PRESETS:
            raise SystemExit(f"unknown weight preset {preset!r}; "
                             f"have {sorted(LOSS_WEIGHT_PRESETS)}")
        return LOSS_WEIGHT_PRESETS[preset]
    return LossWeights(alpha=float(section.get("alpha", 1.0)),
                       beta=float(section.get("beta", 1.0)),
                       gamma=float(section.get("gamma", 1.0)))


def _build_retriever(section: dict, corpus_path: str | None):
    backend = section.get("backend", "mock")
    if backend == "http":
        if not section.get("endpoint"):
            raise SystemExit("http retriever requires an endpoint template")
        return HttpRetriever(HttpRetrieverConfig(
            endpoint=section["endpoint"],
            items_path=section.get("items_path", "results[*]"),
            text_path=section.get("text_path", "text"),
            source_path=section.get("source_path", "id"),
            timeout_s=float(section.get("timeout_s", 3.0))))
    if backend == "mock":
        if not corpus_path:
            return MockRetriever([])
        episodes = load_corpus(CorpusConfig(path=corpus_path))
        return MockRetriever.from_episodes(episodes)
    raise SystemExit(f"unknown retriever backend {backend!r}")


def cmd_validate(args) -> int:
    problems = 0
    with open(args.corpus, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                episode = episode_from_dict(json.loads(line), line_no)
            except (json.JSONDecodeError, CorpusFormatError) as exc:
                print(f"line {line_no}: {exc}")
                problems += 1
                continue
            for violation in validate_episode(episode):
                print(f"line {line_no} ({episode.id}): {violation}")
                problems += 1
    print(f"{problems} violation(s)")
    return 0 if problems == 0 else 1


def cmd_synth(args) -> int:
    episodes = make_synthetic_corpus(args.episodes, args.seed)
    save_corpus(episodes, args.out)
    print(f"wrote {len(episodes)} episodes to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    corpus_cfg = _corpus_config(cfg["corpus"])
    scheme = PromptScheme.from_dict(cfg["prompts"])
    ablation = ABLATIONS[cfg["train"].get("ablation", "full")]
    episodes = load_corpus(corpus_cfg)
    instances = expand_corpus(episodes, scheme, ablation, corpus_cfg)
    if not instances:
        raise SystemExit("corpus expanded to zero instances")

    train_section = cfg["train"]
    seed = args.seed if args.seed is not None else int(train_section.get("seed", 0))
    train_cfg = TrainConfig(
        weights=_loss_weights(train_section),
        learning_rate=float(train_section.get("learning_rate", 2e-5)),
        batch_size=int(train_section.get("batch_size", 8)),
        epochs=int(train_section.get("epochs", 1)),
        seed=seed,
        grad_clip=float(train_section.get("grad_clip", 1.0)),
        checkpoint_every=int(train_section.get("checkpoint_every", 0)),
        warmup_steps=int(train_section.get("warmup_steps", 100)),
        weight_decay=float(train_section.get("weight_decay", 0.01)))
    out_dir = Path(args.out or train_section.get("out_dir", "run"))

    resume_optimizer = resume_state = None
    if args.resume:
        loaded = load_checkpoint(args.resume)
        model = loaded.model
        resume_optimizer, resume_state = loaded.optimizer, loaded.train_state
    else:
        texts = [inst.source for inst in instances] + [inst.target for inst in instances]
        tokenizer = Tokenizer.build(texts)
        spec = BackboneSpec.from_dict(cfg["model"])
        model = build_model(spec, tokenizer, scheme, seed=seed)

    started = time.perf_counter()
    result = train(model, instances, train_cfg, out_dir,
                   resume_optimizer=resume_optimizer, resume_state=resume_state)
    elapsed = time.perf_counter() - started
    print(f"trained {result.steps} steps in {elapsed:.1f}s "
          f"({kernels.BACKEND} kernels); final checkpoint: {result.final_checkpoint}")
    if result.history:
        print(f"final total loss: {result.history[-1].total:.4f}")
    return 0


def cmd_evaluate(args) -> int:
    loaded = load_checkpoint(args.checkpoint)
    corpus_cfg = CorpusConfig(path=args.corpus)
    episodes = load_corpus(corpus_cfg)
    mode = EvalMode(args.mode)
    ablation = ABLATIONS[args.ablation]
    decoding = DecodingConfig(strategy=DecodingStrategy(args.strategy),
                              max_new_tokens=args.max_new_tokens,
                              beam_size=args.beam_size, seed=args.seed or 0)
    records = generate_predictions(loaded.model, episodes, decoding, ablation, mode,
                                   max_context_turns=args.max_context_turns)
    report = score_records(records, mode)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_predictions(records, out / "predictions.jsonl")
    write_report(report, out / "report.json", out / "report.txt")
    print(render_report_text(report), end="")
    return 0


def cmd_ablate(args) -> int:
    corpus_cfg = CorpusConfig(path=args.corpus)
    episodes = load_corpus(corpus_cfg)
    decoding = DecodingConfig(max_new_tokens=args.max_new_tokens, seed=args.seed or 0)
    ckpt_dir = Path(args.checkpoint_dir)
    paths = {name: (ckpt_dir / f"{name}.npz" if (ckpt_dir / f"{name}.npz").exists() else None)
             for name in ABLATIONS}
    matrix = run_ablation_matrix(paths, episodes, decoding,
                                 max_context_turns=args.max_context_turns)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.json").write_text(
        json.dumps(matrix.to_dict(), indent=2) + "\n", encoding="utf-8")
    text = render_ablation_text(matrix)
    (out / "ablation.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


_MODE_ALIASES = {"auto": ForceMode.AUTO, "always": ForceMode.ALWAYS_RETRIEVE,
                 "never": ForceMode.NEVER_RETRIEVE}


def cmd_chat(args) -> int:
    loaded = load_checkpoint(args.checkpoint)
    model = loaded.model
    retriever = _build_retriever({"backend": args.retriever, "endpoint": args.endpoint},
                                 args.corpus)
    decoding = DecodingConfig(max_new_tokens=args.max_new_tokens, seed=args.seed or 0)
    mode = _MODE_ALIASES[args.mode]
    turns: list[DialogueTurn] = []
    print("unirqr chat; empty line or Ctrl-D exits")
    for line in sys.stdin:
        text = line.strip()
        if not text:
            break
        turns.append(DialogueTurn(Speaker.USER, text))
        trace = respond(turns, model, retriever, model.scheme, decoding, mode=mode)
        turns.append(DialogueTurn(Speaker.BOT, trace.response or "..."))
        print(json.dumps(trace.to_dict(), ensure_ascii=False))
    return 0


def cmd_serve(args) -> int:
    loaded = load_checkpoint(args.checkpoint)
    retriever = _build_retriever({"backend": args.retriever, "endpoint": args.endpoint},
                                 args.corpus)
    decoding = DecodingConfig(max_new_tokens=args.max_new_tokens, seed=args.seed or 0)
    store = SessionStore(args.store)
    service = ChatService(loaded.model, retriever, decoding, store,
                          ServiceConfig(static_dir=args.static_dir,
                                        default_mode=_MODE_ALIASES[args.mode]))
    server, thread = start_server(service, host=args.host, port=args.port)
    print(f"serving on http://{args.host}:{server.server_address[1]}")
    try:
        thread.join()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="unirqr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a corpus file against the schema")
    p.add_argument("corpus")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("synth", help="write a synthetic training corpus")
    p.add_argument("out")
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--seed", type=int, default=13)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train from a run config")
    p.add_argument("config")
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.add_argument("--out", default=None, help="override the config out_dir")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a corpus")
    p.add_argument("checkpoint")
    p.add_argument("corpus")
    p.add_argument("--mode", choices=["with_rd", "without_rd"], default="with_rd")
    p.add_argument("--ablation", choices=sorted(ABLATIONS), default="full")
    p.add_argument("--out", default="eval-out")
    p.add_argument("--strategy", choices=["greedy", "beam", "sample"], default="greedy")
    p.add_argument("--max-new-tokens", type=int, default=24)
    p.add_argument("--beam-size", type=int, default=4)
    p.add_argument("--max-context-turns", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("ablate", help="evaluate per-ablation checkpoints into tables")
    p.add_argument("checkpoint_dir")
    p.add_argument("corpus")
    p.add_argument("--out", default="ablation-out")
    p.add_argument("--max-new-tokens", type=int, default=24)
    p.add_argument("--max-context-turns", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("chat", help="interactive REPL printing the per-turn trace")
    p.add_argument("checkpoint")
    p.add_argument("--retriever", choices=["mock", "http"], default="mock")
    p.add_argument("--corpus", default=None, help="corpus backing the mock retriever")
    p.add_argument("--endpoint", default=None, help="http retriever URL template")
    p.add_argument("--mode", choices=sorted(_MODE_ALIASES), default="auto")
    p.add_argument("--max-new-tokens", type=int, default=24)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_chat)

    p = sub.add_parser("serve", help="run the HTTP chat service")
    p.add_argument("checkpoint")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--retriever", choices=["mock", "http"], default="mock")
    p.add_argument("--corpus", default=None, help="corpus backing the mock retriever")
    p.add_argument("--endpoint", default=None, help="http retriever URL template")
    p.add_argument("--mode", choices=sorted(_MODE_ALIASES), default="auto")
    p.add_argument("--static-dir", default=None, help="console bundle directory")
    p.add_argument("--store", default=None, help="JSON-lines session store path")
    p.add_argument("--max-new-tokens", type=int, default=24)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
