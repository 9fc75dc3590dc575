import pytest

from unirqr.evalsuite import (
    EvalMode,
    QueryPrediction,
    ResponsePrediction,
    render_ablation_text,
    score_query_task,
    score_response_task,
)
from unirqr.types import ContractViolation, Decision


def qp(decision, needs, gold=None):
    return QueryPrediction(decision, needs, gold)


class TestScoreQueryTask:
    def test_exact_plus_noquery_halves_f1(self):
        preds = [qp(Decision.query("kelp facts"), True, "kelp facts"),
                 qp(Decision.no_query(), True, "amber facts")]
        report = score_query_task(preds)
        assert report.qg["f1"] == pytest.approx(0.5)
        assert report.qg["bleu1"] == pytest.approx(0.5)

    def test_correct_no_query_stays_out_of_qg_average(self):
        preds = [qp(Decision.query("kelp facts"), True, "kelp facts"),
                 qp(Decision.no_query(), False)]
        report = score_query_task(preds)
        assert report.qg["f1"] == pytest.approx(1.0)
        assert report.rd == {"acc": 1.0, "tpr": 1.0, "tnr": 1.0}

    def test_always_query_predictions_zero_tnr(self):
        preds = [qp(Decision.query("a"), True, "a"),
                 qp(Decision.query("b"), True, "b"),
                 qp(Decision.query("c"), True, "c"),
                 qp(Decision.query("d"), False)]
        report = score_query_task(preds)
        assert report.rd["tpr"] == 1.0
        assert report.rd["tnr"] == 0.0

    def test_without_rd_mode_skips_rd_metrics(self):
        preds = [qp(Decision.query("kelp facts"), True, "kelp facts")]
        report = score_query_task(preds, EvalMode.WITHOUT_RD)
        assert report.rd is None
        assert report.qg["f1"] == pytest.approx(1.0)

    def test_modes_agree_when_all_predictions_are_queries(self):
        preds = [qp(Decision.query("kelp facts today"), True, "kelp facts"),
                 qp(Decision.query("x"), False),
                 qp(Decision.query("amber"), True, "amber facts")]
        with_rd = score_query_task(preds, EvalMode.WITH_RD)
        without = score_query_task(preds, EvalMode.WITHOUT_RD)
        assert with_rd.qg == without.qg

    def test_misaligned_gold_rejected(self):
        with pytest.raises(ContractViolation):
            score_query_task([qp(Decision.no_query(), True, None)])
        with pytest.raises(ContractViolation):
            score_query_task([qp(Decision.query("q"), False, "stray gold")])

    def test_counts(self):
        preds = [qp(Decision.query("a"), True, "a"), qp(Decision.no_query(), False)]
        report = score_query_task(preds)
        assert report.counts == {"query_instances": 2, "required": 1, "not_required": 1}


class TestScoreResponseTask:
    def test_perfect_match(self):
        report = score_response_task(
            [ResponsePrediction("kelp is vast", "kelp is vast", "kelp is vast")])
        assert report.rg["f1"] == pytest.approx(1.0)
        assert report.rg["kf1"] == pytest.approx(1.0)

    def test_distinct_over_corpus(self):
        report = score_response_task([
            ResponsePrediction("a b", "a b", ""),
            ResponsePrediction("a b", "a b", ""),
        ])
        assert report.rg["distinct1"] == pytest.approx(0.5)
        assert report.rg["distinct2"] == pytest.approx(0.5)

    def test_empty_prediction_list(self):
        report = score_response_task([])
        assert report.rg is None


def test_empty_config_set_gives_empty_table():
    from unirqr.evalsuite import run_ablation_matrix
    from unirqr.generate import DecodingConfig

    matrix = run_ablation_matrix({}, [], DecodingConfig(), configs=[])
    assert matrix.query_rows == [] and matrix.response_rows == []


def test_render_ablation_text_handles_absent_rows():
    from unirqr.evalsuite import AblationMatrix

    matrix = AblationMatrix(
        query_rows=[{"config": "full", "label": "full", "present": False,
                     "acc": None, "tpr": None, "tnr": None,
                     "f1": None, "bleu1": None, "bleu2": None}],
        response_rows=[{"config": "full", "label": "full", "present": True,
                        "f1": 0.5, "kf1": 0.25, "bleu1": 0.5, "bleu2": 0.5,
                        "distinct1": 1.0, "distinct2": 1.0}])
    text = render_ablation_text(matrix)
    assert "absent" in text
    assert "50.0%" in text
