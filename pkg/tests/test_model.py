import math

import numpy as np
import pytest

from unirqr.model import (
    BackboneKind,
    BackboneSpec,
    BackboneUnavailableError,
    InputTooLongError,
    build_model,
)
from unirqr.prompts import PromptSide, PromptVariety, render_source
from unirqr.types import ContractViolation, TaskInstance, TaskKind

from conftest import make_micro_model, micro_instances


class TestBackboneSpec:
    def test_dim_head_divisibility(self):
        with pytest.raises(ContractViolation):
            BackboneSpec(model_dim=30, heads=4)

    def test_external_pretrained_not_bundled(self):
        model = make_micro_model()
        with pytest.raises(BackboneUnavailableError):
            build_model(BackboneSpec(kind=BackboneKind.EXTERNAL_PRETRAINED),
                        model.tokenizer, model.scheme)


class TestEncodeInput:
    def test_special_token_query_prefix_id(self):
        model = make_micro_model()
        inst = micro_instances(model.scheme)[0]
        encoded = model.encode_input(inst)
        assert encoded.ids[0] == model.tokenizer.ids["<QG>"]
        assert encoded.prefix_side is None

    def test_rg_with_empty_knowledge_ends_at_separator(self):
        model = make_micro_model()
        inst = micro_instances(model.scheme)[3]
        encoded = model.encode_input(inst)
        assert encoded.ids[-1] == model.tokenizer.ids["[SEP]"]

    def test_continuous_adds_virtual_length(self):
        model = make_micro_model(variety=PromptVariety.CONTINUOUS, continuous_length=10)
        inst = micro_instances(model.scheme)[0]
        encoded = model.encode_input(inst)
        assert encoded.prefix_side is PromptSide.QUERY
        token_count = len(model.tokenizer.encode(inst.source))
        assert len(encoded.ids) == token_count
        memory = model.encoder_memory([encoded])
        assert memory.states.shape[1] == 10 + token_count

    def test_context_truncated_head_first(self):
        model = make_micro_model(spec=BackboneSpec(layers=1, model_dim=16, heads=2,
                                                   ffn_dim=32, max_positions=12))
        context = "user: hello there; bot: hi friend; user: tell me about amber"
        source = render_source(model.scheme, PromptSide.QUERY, context)
        encoded = model.encode_source(source, TaskKind.QG)
        assert len(encoded.ids) <= 12
        decoded = model.tokenizer.decode(encoded.ids)
        assert decoded.endswith("tell me about amber")
        assert "hello" not in decoded.split()[1:]  # oldest turn dropped

    def test_over_length_floor_raises(self):
        model = make_micro_model(spec=BackboneSpec(layers=1, model_dim=16, heads=2,
                                                   ffn_dim=32, max_positions=4))
        source = render_source(model.scheme, PromptSide.QUERY,
                               "user: tell me about amber kelp amber kelp")
        with pytest.raises(InputTooLongError):
            model.encode_source(source, TaskKind.QG)

    def test_knowledge_never_truncated(self):
        model = make_micro_model(spec=BackboneSpec(layers=1, model_dim=16, heads=2,
                                                   ffn_dim=32, max_positions=16))
        source = render_source(model.scheme, PromptSide.RESPONSE,
                               "user: hello there; bot: hi friend; user: tell me about amber",
                               "amber is bright and warm")
        encoded = model.encode_source(source, TaskKind.RG)
        decoded = model.tokenizer.decode(encoded.ids)
        assert decoded.endswith("[SEP] amber is bright and warm")


class TestForwardLoss:
    def test_uniform_model_loss_is_log_vocab(self):
        model = make_micro_model()
        model.params["emb"][:] = 0.0  # logits identically zero -> uniform
        losses = model.forward_loss(micro_instances(model.scheme))
        expected = math.log(len(model.tokenizer))
        assert np.allclose(losses, expected, atol=1e-12)

    def test_peaked_model_loss_approaches_zero(self):
        from unirqr.training import AdamW

        model = make_micro_model()
        insts = [micro_instances(model.scheme)[2]]  # RD: target "No Query"
        optimizer = AdamW(model.params, lr=5e-3, weight_decay=0.0)
        for _ in range(150):
            _, grads = model.loss_and_grads(insts, [1.0])
            optimizer.step(grads)
        assert model.forward_loss(insts)[0] < 0.05

    def test_empty_target_rejected(self):
        model = make_micro_model()
        inst = TaskInstance("e", 1, TaskKind.QG, "<QG> user: hi", "　", True)
        # target encodes to zero ids after whitespace split
        with pytest.raises(ContractViolation):
            model.forward_loss([inst])

    def test_batch_losses_match_single_instance_losses(self):
        model = make_micro_model()
        insts = micro_instances(model.scheme)
        batched = model.forward_loss(insts)
        individual = [model.forward_loss([i])[0] for i in insts]
        assert np.allclose(batched, individual, atol=1e-9)


class TestDeterminism:
    def test_same_seed_same_init(self):
        a = make_micro_model(seed=5)
        b = make_micro_model(seed=5)
        for name in a.params:
            assert np.array_equal(a.params[name], b.params[name])

    def test_different_seed_different_init(self):
        a = make_micro_model(seed=5)
        b = make_micro_model(seed=6)
        assert any(not np.array_equal(a.params[n], b.params[n]) for n in a.params)

    def test_forward_bitwise_deterministic(self):
        model = make_micro_model()
        insts = micro_instances(model.scheme)
        first = model.forward_loss(insts)
        second = model.forward_loss(insts)
        assert np.array_equal(first, second)


def _relative_errors(model, instances, weights, names, rng, samples=8):
    losses, grads = model.loss_and_grads(instances, weights)
    w = np.asarray(weights)

    def total():
        return float(np.dot(model.forward_loss(instances), w))

    errors = []
    for name in names:
        flat = model.params[name].reshape(-1)
        take = min(samples, flat.size)
        for i in rng.choice(flat.size, size=take, replace=False):
            orig = flat[i]
            h = 1e-5 * max(1.0, abs(orig))
            flat[i] = orig + h
            up = total()
            flat[i] = orig - h
            down = total()
            flat[i] = orig
            fd = (up - down) / (2 * h)
            analytic = grads[name].reshape(-1)[i]
            errors.append(abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-7))
    return errors


class TestGradients:
    def test_continuous_prompt_gradcheck(self):
        model = make_micro_model(variety=PromptVariety.CONTINUOUS, continuous_length=4)
        insts = micro_instances(model.scheme)
        errors = _relative_errors(model, insts, [0.7, 1.1, 0.4, 0.9],
                                  ["prompt.query", "prompt.response"],
                                  np.random.default_rng(0), samples=16)
        assert max(errors) <= 1e-3

    def test_backbone_parameter_gradcheck_spot(self):
        model = make_micro_model()
        insts = micro_instances(model.scheme)
        names = ["emb", "enc0.self.wq", "enc1.ffn.w1", "dec0.cross.wv",
                 "dec1.self.wo", "dec_lnf.g", "enc0.ln1.b", "dec0.ffn.b2"]
        errors = _relative_errors(model, insts, [1.0, 1.0, 1.0, 1.0],
                                  names, np.random.default_rng(1), samples=4)
        # FD noise dominates for near-zero entries; check the bulk tightly.
        assert np.median(errors) <= 1e-5
        assert max(errors) <= 5e-2

    def test_prompt_side_isolation_at_encoder_input(self):
        model = make_micro_model(variety=PromptVariety.CONTINUOUS, continuous_length=4)
        ctx = "user: tell me about amber"
        q = model.encode_source(render_source(model.scheme, PromptSide.QUERY, ctx),
                                TaskKind.QG)
        r = model.encode_source(render_source(model.scheme, PromptSide.RESPONSE, ctx, ""),
                                TaskKind.RG)
        mem_q = model.encoder_memory([q])
        model.params["prompt.response"][:] = model.params["prompt.query"] + 1.0
        mem_r = model.encoder_memory([r])
        assert mem_q.states.shape[1] != mem_r.states.shape[1] or \
            not np.allclose(mem_q.states, mem_r.states)

    def test_trained_prefixes_separate_the_two_sides(self, trained_continuous_model):
        from unirqr.corpus import render_context
        from unirqr.generate import DecodingConfig, generate_text
        from unirqr.synthetic import make_synthetic_corpus

        model = trained_continuous_model
        q_tab, r_tab = model.params["prompt.query"], model.params["prompt.response"]
        assert not np.allclose(q_tab, r_tab)
        # A context the model actually trained on: only the prefix side
        # differs between the two encodings below.
        episodes = make_synthetic_corpus(30, seed=21)
        episode = next(e for e in episodes if e.annotations[0].needs_retrieval)
        ann = episode.annotations[0]
        ctx = render_context(episode.turns, ann.turn_index - 1, 5)
        q_src = model.encode_source(render_source(model.scheme, PromptSide.QUERY, ctx),
                                    TaskKind.QG)
        r_src = model.encode_source(
            render_source(model.scheme, PromptSide.RESPONSE, ctx, ann.gold_knowledge),
            TaskKind.RG)
        cfg = DecodingConfig(max_new_tokens=16)
        query_out = generate_text(model, q_src, cfg)
        response_out = generate_text(model, r_src, cfg)
        assert query_out != response_out
        assert query_out.endswith("facts")      # query-shaped, not a response
        assert not response_out.endswith("facts")
