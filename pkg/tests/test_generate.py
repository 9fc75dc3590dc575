import numpy as np
import pytest

from unirqr.generate import DecodingConfig, DecodingStrategy, generate, generate_text
from unirqr.model import EncodedSource, EncoderMemory
from unirqr.tokenizer import Tokenizer
from unirqr.types import ContractViolation

from conftest import make_micro_model, micro_instances


class ForcedModel:
    """Stub whose argmax chain is fixed: logits at step t peak on chain[t]."""

    def __init__(self, chain, vocab_size=12):
        self.chain = chain
        self.vocab_size = vocab_size
        self.tokenizer = Tokenizer.build(["a b c d e"])

    def encoder_memory(self, sources):
        return EncoderMemory(np.zeros((len(sources), 1, 4)),
                             np.ones((len(sources), 1), dtype=bool))

    def decoder_logits(self, dec_ids, memory):
        b, t = dec_ids.shape
        logits = np.zeros((b, t, len(self.tokenizer)))
        for step in range(t):
            target = self.chain[step] if step < len(self.chain) else self.tokenizer.eos_id
            logits[:, step, target] = 5.0
        return logits


SOURCE = EncodedSource(ids=(1,), prefix_side=None)


class TestGreedy:
    def test_forced_chain_is_followed(self):
        # Hand-enumerated argmax chain: step 0 -> 7, step 1 -> 8, step 2 -> 9, then eos.
        model = ForcedModel(chain=[7, 8, 9])
        out = generate(model, SOURCE, DecodingConfig(max_new_tokens=10))
        assert out == [7, 8, 9]

    def test_stops_at_max_new_tokens(self):
        model = ForcedModel(chain=[7] * 50)
        out = generate(model, SOURCE, DecodingConfig(max_new_tokens=3))
        assert out == [7, 7, 7]

    def test_zero_budget_returns_empty(self):
        model = ForcedModel(chain=[7])
        assert generate(model, SOURCE, DecodingConfig(max_new_tokens=0)) == []

    def test_banned_first_token_suppressed(self):
        model = ForcedModel(chain=[7, 8])
        out = generate(model, SOURCE,
                       DecodingConfig(max_new_tokens=4, banned_first_ids=(7,)))
        assert out[0] != 7

    def test_real_model_greedy_is_deterministic(self):
        model = make_micro_model()
        encoded = model.encode_input(micro_instances(model.scheme)[0])
        cfg = DecodingConfig(max_new_tokens=8)
        assert generate(model, encoded, cfg) == generate(model, encoded, cfg)


class TestBeam:
    def test_beam_one_equals_greedy_on_forced_model(self):
        model = ForcedModel(chain=[7, 9, 8])
        greedy = generate(model, SOURCE, DecodingConfig(max_new_tokens=6))
        beam = generate(model, SOURCE, DecodingConfig(
            strategy=DecodingStrategy.BEAM, beam_size=1, max_new_tokens=6))
        assert beam == greedy

    def test_beam_one_equals_greedy_on_real_model(self):
        model = make_micro_model(seed=9)
        for inst in micro_instances(model.scheme):
            encoded = model.encode_input(inst)
            greedy = generate(model, encoded, DecodingConfig(max_new_tokens=6))
            beam = generate(model, encoded, DecodingConfig(
                strategy=DecodingStrategy.BEAM, beam_size=1, max_new_tokens=6))
            assert beam == greedy

    def test_wide_beam_follows_dominant_chain(self):
        model = ForcedModel(chain=[7, 8, 9])
        out = generate(model, SOURCE, DecodingConfig(
            strategy=DecodingStrategy.BEAM, beam_size=3, max_new_tokens=10))
        assert out == [7, 8, 9]


class TestSampling:
    def test_fixed_seed_reproduces(self):
        model = make_micro_model()
        encoded = model.encode_input(micro_instances(model.scheme)[0])
        cfg = DecodingConfig(strategy=DecodingStrategy.SAMPLE, max_new_tokens=6,
                             temperature=1.0, seed=42)
        assert generate(model, encoded, cfg) == generate(model, encoded, cfg)

    def test_temperature_must_be_positive(self):
        with pytest.raises(ContractViolation):
            DecodingConfig(strategy=DecodingStrategy.SAMPLE, temperature=0.0)


def test_generate_text_decodes_through_tokenizer():
    model = make_micro_model()
    encoded = model.encode_input(micro_instances(model.scheme)[0])
    text = generate_text(model, encoded, DecodingConfig(max_new_tokens=6))
    assert isinstance(text, str)
