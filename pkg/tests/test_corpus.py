import json

import pytest
from hypothesis import given, settings, strategies as st

from unirqr.corpus import (
    BatchStream,
    CorpusConfig,
    CorpusFormatError,
    episode_from_dict,
    episode_to_dict,
    expand_instances,
    load_corpus,
    render_context,
    save_corpus,
)
from unirqr.prompts import PromptScheme
from unirqr.types import (
    ABLATIONS,
    ContractViolation,
    DialogueTurn,
    Episode,
    NO_QUERY_SENTINEL,
    Speaker,
    TaskKind,
    TurnAnnotation,
    validate_episode,
)

SCHEME = PromptScheme()


def turn(speaker, text):
    return DialogueTurn(Speaker(speaker), text)


def retrieval_episode(eid="e1"):
    return Episode(eid,
                   [turn("user", "tell me about kelp"), turn("bot", "kelp is vast")],
                   [TurnAnnotation(1, True, "kelp is vast",
                                   gold_query="kelp facts", gold_knowledge="kelp is vast")])


def chitchat_episode(eid="e2"):
    return Episode(eid,
                   [turn("user", "hi there"), turn("bot", "hello")],
                   [TurnAnnotation(1, False, "hello")])


class TestLoadCorpus:
    def test_empty_file_gives_empty_list(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text("")
        assert load_corpus(CorpusConfig(path=str(path))) == []

    def test_one_episode_round_trip(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        save_corpus([retrieval_episode("round")], path)
        episodes = load_corpus(CorpusConfig(path=str(path)))
        assert len(episodes) == 1
        assert episodes[0].id == "round"
        assert episodes[0] == retrieval_episode("round")

    def test_missing_gold_response_names_field_and_line(self, tmp_path):
        record = episode_to_dict(chitchat_episode())
        del record["annotations"][0]["gold_response"]
        path = tmp_path / "corpus.jsonl"
        path.write_text(json.dumps(record) + "\n")
        with pytest.raises(CorpusFormatError, match="line 1.*gold_response"):
            load_corpus(CorpusConfig(path=str(path)))

    def test_invalid_json_names_line(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"id": "e1"}\nnot json\n')
        with pytest.raises(CorpusFormatError, match="line 1|line 2"):
            load_corpus(CorpusConfig(path=str(path)))

    def test_unreadable_path_raises_io_error(self):
        with pytest.raises(OSError):
            load_corpus(CorpusConfig(path="/nonexistent/corpus.jsonl"))


class TestRenderContext:
    def test_single_turn(self):
        assert render_context([turn("user", "hi")], 0, 5) == "user: hi"

    def test_three_turns_full_window(self):
        turns = [turn("user", "hi"), turn("bot", "hello"), turn("user", "weather?")]
        assert render_context(turns, 2, 3) == "user: hi; bot: hello; user: weather?"

    def test_window_truncation_keeps_most_recent(self):
        turns = [turn("user", "hi"), turn("bot", "hello"), turn("user", "weather?")]
        assert render_context(turns, 2, 2) == "bot: hello; user: weather?"

    def test_out_of_range_upto_rejected(self):
        with pytest.raises(ContractViolation):
            render_context([turn("user", "hi")], 1, 5)

    @given(st.integers(min_value=1, max_value=8), st.integers(min_value=1, max_value=8))
    def test_separator_count_matches_included_turns(self, n_turns, max_turns):
        turns = [turn("user" if i % 2 == 0 else "bot", f"t{i}") for i in range(n_turns)]
        rendered = render_context(turns, n_turns - 1, max_turns)
        included = min(n_turns, max_turns)
        assert rendered.count("; ") == included - 1


class TestExpandInstances:
    def test_retrieval_annotation_yields_qg_and_rg(self):
        instances = expand_instances(retrieval_episode(), SCHEME)
        assert len(instances) == 2
        qg, rg = instances
        assert qg.kind is TaskKind.QG and qg.target == "kelp facts"
        assert rg.kind is TaskKind.RG and rg.target == "kelp is vast"
        assert "[SEP] kelp is vast" in rg.source

    def test_chitchat_annotation_yields_rd_and_empty_knowledge_rg(self):
        instances = expand_instances(chitchat_episode(), SCHEME)
        assert len(instances) == 2
        rd, rg = instances
        assert rd.kind is TaskKind.RD and rd.target == NO_QUERY_SENTINEL
        assert rg.source.rstrip().endswith("[SEP]")

    def test_ablation_without_rg_drops_rg_instances(self):
        episodes = [retrieval_episode(f"e{i}") for i in range(3)]
        instances = [inst for e in episodes
                     for inst in expand_instances(e, SCHEME, ABLATIONS["wo_rg"])]
        assert len(instances) == 3
        assert all(inst.kind is TaskKind.QG for inst in instances)

    def test_ablation_without_rd_drops_rd_instances(self):
        instances = expand_instances(chitchat_episode(), SCHEME, ABLATIONS["wo_rd"])
        assert [inst.kind for inst in instances] == [TaskKind.RG]

    def test_ablation_without_knowledge_empties_segment(self):
        instances = expand_instances(retrieval_episode(), SCHEME,
                                     ABLATIONS["wo_knowledge"])
        rg = [i for i in instances if i.kind is TaskKind.RG][0]
        assert rg.source.rstrip().endswith("[SEP]")

    def test_instance_count_without_ablation(self):
        episodes = [retrieval_episode("a"), chitchat_episode("b")]
        total = sum(len(expand_instances(e, SCHEME)) for e in episodes)
        assert total == 2 * sum(len(e.annotations) for e in episodes)

    def test_qg_rd_partition_follows_needs_retrieval(self):
        for episode in (retrieval_episode(), chitchat_episode()):
            for inst in expand_instances(episode, SCHEME):
                if inst.kind is TaskKind.QG:
                    assert inst.needs_retrieval
                if inst.kind is TaskKind.RD:
                    assert not inst.needs_retrieval


class TestBatchStream:
    def _instances(self, n):
        episodes = [retrieval_episode(f"e{i:03d}") for i in range(n)]
        return [inst for e in episodes for inst in expand_instances(e, SCHEME)]

    def test_batch_sizes(self):
        stream = BatchStream(self._instances(5), batch_size=8, seed=0)
        batches = stream.epoch_batches(0)
        assert [len(b) for b in batches] == [8, 2]

    def test_every_instance_once_per_epoch(self):
        instances = self._instances(7)
        stream = BatchStream(instances, batch_size=4, seed=3)
        seen = [i for b in stream.epoch_batches(1) for i in b]
        assert sorted(id(x) for x in seen) == sorted(id(x) for x in instances)

    def test_same_seed_same_order(self):
        instances = self._instances(10)
        a = BatchStream(instances, 4, seed=5).epoch_batches(2)
        b = BatchStream(instances, 4, seed=5).epoch_batches(2)
        assert a == b

    def test_different_seeds_differ(self):
        instances = self._instances(60)  # >= 100 instances
        a = BatchStream(instances, 4, seed=1).epoch_order(0)
        b = BatchStream(instances, 4, seed=2).epoch_order(0)
        assert a != b

    def test_order_stable_under_deletion(self):
        instances = self._instances(20)
        full = BatchStream(instances, 4, seed=5).epoch_order(0)
        kept = [i for i in instances if i.kind is not TaskKind.QG]
        filtered = BatchStream(kept, 4, seed=5).epoch_order(0)
        assert filtered == [i for i in full if i.kind is not TaskKind.QG]

    def test_batch_size_must_be_positive(self):
        with pytest.raises(ContractViolation):
            BatchStream(self._instances(1), 0, seed=0)


texts = st.text(alphabet="abcdefg hi", min_size=1, max_size=12).filter(str.strip)


@st.composite
def episodes(draw):
    n_turns = draw(st.integers(min_value=2, max_value=6))
    turns = [DialogueTurn(draw(st.sampled_from(list(Speaker))), draw(texts))
             for _ in range(n_turns)]
    bot_positions = [i for i, t in enumerate(turns) if t.speaker is Speaker.BOT]
    annotations = []
    for idx in sorted(draw(st.sets(st.sampled_from(bot_positions)))) if bot_positions else []:
        needs = draw(st.booleans())
        annotations.append(TurnAnnotation(
            turn_index=idx, needs_retrieval=needs,
            gold_query=draw(texts) if needs else None,
            gold_knowledge=draw(texts) if needs and draw(st.booleans()) else None,
            gold_response=draw(texts)))
    return Episode(draw(st.uuids()).hex, turns, annotations)


@given(episodes())
@settings(max_examples=60)
def test_serialize_parse_round_trip(episode):
    assert episode_from_dict(episode_to_dict(episode)) == episode


@given(episodes())
@settings(max_examples=60)
def test_expanded_instances_satisfy_invariants(episode):
    if validate_episode(episode):
        return
    instances = expand_instances(episode, SCHEME)
    assert len(instances) == 2 * len(episode.annotations)
    for inst in instances:
        if inst.kind is TaskKind.RG:
            assert inst.source.split().count("[SEP]") == 1
        else:
            assert (inst.target == NO_QUERY_SENTINEL) == (inst.kind is TaskKind.RD)
