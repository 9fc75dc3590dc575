"""Benchmark the compiled kernels against the numpy reference backend.

Usage: python benchmarks/bench_kernels.py [--repeat 200]

Reports per-kernel microbenchmarks on training-shaped inputs plus an
end-to-end training-step comparison with each backend active.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from unirqr import kernels
from unirqr.corpus import expand_corpus
from unirqr.model import BackboneSpec, build_model
from unirqr.prompts import PromptScheme
from unirqr.synthetic import make_synthetic_corpus
from unirqr.tokenizer import Tokenizer


def timeit(fn, repeat: int) -> float:
    fn()  # warm up
    start = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - start) / repeat * 1e6  # microseconds


def kernel_cases(rng):
    attn = np.ascontiguousarray(rng.normal(size=(2048, 48)))
    attn_dy = np.ascontiguousarray(rng.normal(size=attn.shape))
    probs = kernels.softmax_rows(attn)
    hidden = np.ascontiguousarray(rng.normal(size=(768, 64)))
    hidden_dy = np.ascontiguousarray(rng.normal(size=hidden.shape))
    gain = rng.normal(size=64)
    bias = rng.normal(size=64)
    _, mean, rstd = kernels.layernorm_forward(hidden, gain, bias)
    ffn = np.ascontiguousarray(rng.normal(size=(768, 128)))
    ffn_dy = np.ascontiguousarray(rng.normal(size=ffn.shape))
    logits = np.ascontiguousarray(rng.normal(size=(512, 200)))
    labels = rng.integers(0, 200, size=512).astype(np.int64)
    scale = np.abs(rng.normal(size=512))
    _, xent_probs = kernels.cross_entropy_forward(logits, labels, 0)
    return [
        ("softmax_rows (2048x48)", lambda: kernels.softmax_rows(attn)),
        ("softmax_backward (2048x48)",
         lambda: kernels.softmax_backward_rows(probs, attn_dy)),
        ("layernorm_forward (768x64)",
         lambda: kernels.layernorm_forward(hidden, gain, bias)),
        ("layernorm_backward (768x64)",
         lambda: kernels.layernorm_backward(hidden_dy, hidden, gain, mean, rstd)),
        ("gelu_forward (768x128)", lambda: kernels.gelu_forward(ffn)),
        ("gelu_backward (768x128)", lambda: kernels.gelu_backward(ffn, ffn_dy)),
        ("cross_entropy_forward (512x200)",
         lambda: kernels.cross_entropy_forward(logits, labels, 0)),
        ("cross_entropy_backward (512x200)",
         lambda: kernels.cross_entropy_backward(xent_probs, labels, scale, 0)),
    ]


def bench_kernels(repeat: int):
    rng = np.random.default_rng(0)
    rows = []
    for name, fn in kernel_cases(rng):
        per_backend = {}
        for backend in kernels.available_backends():
            kernels.use_backend(backend)
            per_backend[backend] = timeit(fn, repeat)
        rows.append((name, per_backend))
    return rows


def bench_train_step(repeat: int):
    episodes = make_synthetic_corpus(32, seed=13)
    scheme = PromptScheme()
    instances = expand_corpus(episodes, scheme)
    tokenizer = Tokenizer.build([i.source for i in instances] +
                                [i.target for i in instances])
    spec = BackboneSpec(layers=2, model_dim=64, heads=4, ffn_dim=128, max_positions=96)
    model = build_model(spec, tokenizer, scheme, seed=7)
    batch = instances[:16]
    weights = [1.0] * len(batch)
    per_backend = {}
    for backend in kernels.available_backends():
        kernels.use_backend(backend)
        per_backend[backend] = timeit(
            lambda: model.loss_and_grads(batch, weights), max(5, repeat // 20)) / 1000.0
    return per_backend


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=200)
    args = parser.parse_args()

    backends = kernels.available_backends()
    print(f"available backends: {', '.join(backends)}")
    if "compiled" not in backends:
        print("compiled extension not built; showing reference timings only")

    print(f"\n{'kernel':<36} " + " ".join(f"{b:>12}" for b in backends) +
          ("      speedup" if len(backends) > 1 else ""))
    for name, per_backend in bench_kernels(args.repeat):
        cells = " ".join(f"{per_backend[b]:>10.1f}us" for b in backends)
        line = f"{name:<36} {cells}"
        if "compiled" in per_backend and "reference" in per_backend:
            line += f"   {per_backend['reference'] / per_backend['compiled']:>8.2f}x"
        print(line)

    step = bench_train_step(args.repeat)
    print(f"\n{'full training step (batch 16)':<36} " +
          " ".join(f"{step[b]:>10.2f}ms" for b in backends), end="")
    if len(backends) > 1:
        print(f"   {step['reference'] / step['compiled']:>8.2f}x")
    else:
        print()
    kernels.use_backend("compiled" if "compiled" in backends else "reference")


if __name__ == "__main__":
    main()
