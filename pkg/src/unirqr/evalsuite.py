"""Scoring conventions, prediction generation, and the ablation matrix.

Query-generation metrics follow the retrieval-only convention: they are
averaged over instances that require retrieval, a "No Query" prediction on
such an instance scores zero on every metric, and correct "No Query"
predictions on the remaining instances stay out of the averages entirely.
Retrieval-decision rates treat retrieval-required as the positive class.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .generate import DecodingConfig, generate_text
from .metrics import bleu_n, distinct_n, knowledge_f1, metric_tokens, unigram_f1
from .model import TinyReferenceModel
from .prompts import DegenerateDecisionError, PromptSide, parse_decision, render_source
from .corpus import render_context
from .types import (
    ABLATIONS,
    AblationConfig,
    ContractViolation,
    Decision,
    Episode,
    NO_QUERY_SENTINEL,
    TaskKind,
)


class EvalMode(str, enum.Enum):
    WITH_RD = "with_rd"
    WITHOUT_RD = "without_rd"


@dataclass(frozen=True)
class QueryPrediction:
    decision: Decision
    needs_retrieval: bool
    gold_query: str | None


@dataclass(frozen=True)
class ResponsePrediction:
    response: str
    gold_response: str
    knowledge: str


@dataclass(frozen=True)
class MetricReport:
    qg: dict | None
    rg: dict | None
    rd: dict | None
    counts: dict

    def to_dict(self) -> dict:
        return {"qg": self.qg, "rg": self.rg, "rd": self.rd, "counts": self.counts}


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values)


def score_query_task(predictions: Sequence[QueryPrediction],
                     mode: EvalMode = EvalMode.WITH_RD) -> MetricReport:
    """QG metrics under the retrieval-only convention plus RD rates.

    In `without_rd` mode every prediction is treated as a query (the system
    ran with the decision task disabled) and RD rates are not reported.
    """
    for p in predictions:
        if p.needs_retrieval and not p.gold_query:
            raise ContractViolation("gold_query required for retrieval instances")
        if not p.needs_retrieval and p.gold_query is not None:
            raise ContractViolation("gold_query must be absent for non-retrieval instances")

    f1s, b1s, b2s = [], [], []
    for p in predictions:
        if not p.needs_retrieval:
            continue
        if p.decision.is_query:
            hyp_text = p.decision.query_text
        elif mode is EvalMode.WITHOUT_RD:
            hyp_text = NO_QUERY_SENTINEL
        else:
            f1s.append(0.0)
            b1s.append(0.0)
            b2s.append(0.0)
            continue
        hyp = metric_tokens(hyp_text)
        ref = metric_tokens(p.gold_query)
        f1s.append(unigram_f1(hyp, ref))
        b1s.append(bleu_n(hyp, ref, 1))
        b2s.append(bleu_n(hyp, ref, 2))

    qg = {"f1": _mean(f1s), "bleu1": _mean(b1s), "bleu2": _mean(b2s)} if f1s else None

    rd = None
    if mode is EvalMode.WITH_RD and predictions:
        tp = sum(1 for p in predictions if p.needs_retrieval and p.decision.is_query)
        fn = sum(1 for p in predictions if p.needs_retrieval and not p.decision.is_query)
        tn = sum(1 for p in predictions if not p.needs_retrieval and not p.decision.is_query)
        fp = sum(1 for p in predictions if not p.needs_retrieval and p.decision.is_query)
        rd = {
            "acc": (tp + tn) / len(predictions),
            "tpr": tp / (tp + fn) if tp + fn else None,
            "tnr": tn / (tn + fp) if tn + fp else None,
        }

    counts = {
        "query_instances": len(predictions),
        "required": sum(1 for p in predictions if p.needs_retrieval),
        "not_required": sum(1 for p in predictions if not p.needs_retrieval),
    }
    return MetricReport(qg=qg, rg=None, rd=rd, counts=counts)


def score_response_task(predictions: Sequence[ResponsePrediction]) -> MetricReport:
    """Response metrics: overlap with the gold reply, grounding, diversity."""
    if not predictions:
        return MetricReport(qg=None, rg=None, rd=None, counts={"response_instances": 0})
    f1s, kf1s, b1s, b2s = [], [], [], []
    hyp_token_lists = []
    for p in predictions:
        hyp = metric_tokens(p.response)
        ref = metric_tokens(p.gold_response)
        hyp_token_lists.append(hyp)
        f1s.append(unigram_f1(hyp, ref))
        kf1s.append(knowledge_f1(p.response, p.knowledge))
        b1s.append(bleu_n(hyp, ref, 1))
        b2s.append(bleu_n(hyp, ref, 2))
    rg = {
        "f1": _mean(f1s),
        "kf1": _mean(kf1s),
        "bleu1": _mean(b1s),
        "bleu2": _mean(b2s),
        "distinct1": distinct_n(hyp_token_lists, 1),
        "distinct2": distinct_n(hyp_token_lists, 2),
    }
    return MetricReport(qg=None, rg=rg, rd=None,
                        counts={"response_instances": len(predictions)})


def merge_reports(query: MetricReport | None, response: MetricReport | None) -> MetricReport:
    counts: dict = {}
    if query:
        counts.update(query.counts)
    if response:
        counts.update(response.counts)
    return MetricReport(
        qg=query.qg if query else None,
        rg=response.rg if response else None,
        rd=query.rd if query else None,
        counts=counts,
    )


@dataclass(frozen=True)
class PredictionRecord:
    episode_id: str
    turn_index: int
    task: str                 # "query" | "response"
    prediction: str
    decision: Decision | None
    needs_retrieval: bool
    gold_query: str | None
    gold_response: str
    knowledge: str

    def to_wire(self) -> dict:
        return {
            "episode_id": self.episode_id,
            "turn_index": self.turn_index,
            "task": self.task,
            "prediction": self.prediction,
            "decision": self.decision.variant.value if self.decision else None,
        }


def generate_predictions(model: TinyReferenceModel, episodes: Sequence[Episode],
                         decoding: DecodingConfig,
                         ablation: AblationConfig = ABLATIONS["full"],
                         mode: EvalMode = EvalMode.WITH_RD,
                         max_context_turns: int = 5) -> list[PredictionRecord]:
    """Run the model over every annotation; gold knowledge feeds the RG input."""
    from .pipeline import sentinel_first_token_ids

    records: list[PredictionRecord] = []
    query_side_active = not (ablation.drop_qg and ablation.drop_rd)
    bans = sentinel_first_token_ids(model) if mode is EvalMode.WITHOUT_RD else ()
    query_decoding = DecodingConfig(
        strategy=decoding.strategy, max_new_tokens=decoding.max_new_tokens,
        beam_size=decoding.beam_size, temperature=decoding.temperature,
        seed=decoding.seed, length_penalty=decoding.length_penalty,
        banned_first_ids=tuple(bans))
    for episode in episodes:
        for ann in episode.annotations:
            context = render_context(episode.turns, ann.turn_index - 1, max_context_turns)
            if query_side_active:
                source = render_source(model.scheme, PromptSide.QUERY, context)
                decoded = generate_text(
                    model, model.encode_source(source, TaskKind.QG), query_decoding)
                if mode is EvalMode.WITHOUT_RD:
                    decision = (Decision.query(decoded.strip())
                                if decoded.strip() else Decision.no_query())
                else:
                    try:
                        decision = parse_decision(decoded)
                    except DegenerateDecisionError:
                        decision = Decision.no_query()
                records.append(PredictionRecord(
                    episode_id=episode.id, turn_index=ann.turn_index, task="query",
                    prediction=decoded, decision=decision,
                    needs_retrieval=ann.needs_retrieval,
                    gold_query=ann.gold_query, gold_response=ann.gold_response,
                    knowledge=""))
            if not ablation.drop_rg:
                knowledge = "" if ablation.drop_knowledge else (ann.gold_knowledge or "")
                source = render_source(model.scheme, PromptSide.RESPONSE, context, knowledge)
                response = generate_text(
                    model, model.encode_source(source, TaskKind.RG), decoding)
                records.append(PredictionRecord(
                    episode_id=episode.id, turn_index=ann.turn_index, task="response",
                    prediction=response, decision=None,
                    needs_retrieval=ann.needs_retrieval,
                    gold_query=ann.gold_query, gold_response=ann.gold_response,
                    knowledge=knowledge))
    return records


def score_records(records: Sequence[PredictionRecord],
                  mode: EvalMode = EvalMode.WITH_RD) -> MetricReport:
    query_preds = [QueryPrediction(r.decision, r.needs_retrieval, r.gold_query)
                   for r in records if r.task == "query"]
    response_preds = [ResponsePrediction(r.prediction, r.gold_response, r.knowledge)
                      for r in records if r.task == "response"]
    query_report = score_query_task(query_preds, mode) if query_preds else None
    response_report = score_response_task(response_preds) if response_preds else None
    return merge_reports(query_report, response_report)


def write_predictions(records: Sequence[PredictionRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_wire(), ensure_ascii=False) + "\n")


def write_report(report: MetricReport, json_path: str | Path,
                 text_path: str | Path | None = None) -> None:
    Path(json_path).write_text(
        json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8")
    if text_path is not None:
        Path(text_path).write_text(render_report_text(report), encoding="utf-8")


def _fmt(value) -> str:
    return "--" if value is None else f"{100.0 * value:.1f}%"


def render_report_text(report: MetricReport) -> str:
    lines = []
    if report.rd:
        lines.append("RD   acc {}  tpr {}  tnr {}".format(
            _fmt(report.rd["acc"]), _fmt(report.rd["tpr"]), _fmt(report.rd["tnr"])))
    if report.qg:
        lines.append("QG   f1 {}  bleu1 {}  bleu2 {}".format(
            _fmt(report.qg["f1"]), _fmt(report.qg["bleu1"]), _fmt(report.qg["bleu2"])))
    if report.rg:
        lines.append("RG   f1 {}  kf1 {}  bleu1 {}  bleu2 {}  distinct1 {}  distinct2 {}".format(
            _fmt(report.rg["f1"]), _fmt(report.rg["kf1"]), _fmt(report.rg["bleu1"]),
            _fmt(report.rg["bleu2"]), _fmt(report.rg["distinct1"]),
            _fmt(report.rg["distinct2"])))
    lines.append("counts " + json.dumps(report.counts))
    return "\n".join(lines) + "\n"


QUERY_TABLE_ROWS = ("full", "wo_rd", "wo_rg", "wo_knowledge", "wo_knowledge_rd")
RESPONSE_TABLE_ROWS = ("full", "wo_rd", "wo_qg_rd")

QUERY_TABLE_COLUMNS = ("acc", "tpr", "tnr", "f1", "bleu1", "bleu2")
RESPONSE_TABLE_COLUMNS = ("f1", "kf1", "bleu1", "bleu2", "distinct1", "distinct2")


@dataclass(frozen=True)
class AblationMatrix:
    query_rows: list[dict]
    response_rows: list[dict]

    def to_dict(self) -> dict:
        return {"query_task": self.query_rows, "response_task": self.response_rows}


def run_ablation_matrix(checkpoint_paths: dict[str, str | Path | None],
                        episodes: Sequence[Episode],
                        decoding: DecodingConfig,
                        max_context_turns: int = 5,
                        configs: Sequence[str] | None = None) -> AblationMatrix:
    """Evaluate one checkpoint per ablation config into the two report tables.

    `configs` selects the rows (default: both full row sets); a missing
    checkpoint marks its row absent and the run continues.
    """
    from .checkpoint import load_checkpoint

    if configs is None:
        wanted = list(dict.fromkeys(QUERY_TABLE_ROWS + RESPONSE_TABLE_ROWS))
    else:
        wanted = list(configs)
    reports: dict[str, MetricReport] = {}
    for name in wanted:
        path = checkpoint_paths.get(name)
        if path is None or not Path(path).exists():
            continue
        ablation = ABLATIONS[name]
        mode = EvalMode.WITHOUT_RD if ablation.drop_rd else EvalMode.WITH_RD
        model = load_checkpoint(path).model
        records = generate_predictions(model, episodes, decoding, ablation, mode,
                                       max_context_turns)
        reports[name] = score_records(records, mode)

    def query_row(name: str) -> dict:
        row = {"config": name, "label": ABLATIONS[name].label, "present": name in reports}
        for col in QUERY_TABLE_COLUMNS:
            row[col] = None
        if name in reports:
            report = reports[name]
            if report.rd:
                row.update({k: report.rd[k] for k in ("acc", "tpr", "tnr")})
            if report.qg:
                row.update({k: report.qg[k] for k in ("f1", "bleu1", "bleu2")})
        return row

    def response_row(name: str) -> dict:
        row = {"config": name, "label": ABLATIONS[name].label, "present": name in reports}
        for col in RESPONSE_TABLE_COLUMNS:
            row[col] = None
        if name in reports and reports[name].rg:
            row.update({k: reports[name].rg[k] for k in RESPONSE_TABLE_COLUMNS})
        return row

    return AblationMatrix(
        query_rows=[query_row(n) for n in QUERY_TABLE_ROWS if n in wanted],
        response_rows=[response_row(n) for n in RESPONSE_TABLE_ROWS if n in wanted],
    )


def render_ablation_text(matrix: AblationMatrix) -> str:
    lines = ["query task (RD + QG)"]
    header = ["config"] + list(QUERY_TABLE_COLUMNS)
    lines.append("  ".join(f"{h:>18}" for h in header))
    for row in matrix.query_rows:
        cells = [row["label"]] + [
            "absent" if not row["present"] else _fmt(row[c]) for c in QUERY_TABLE_COLUMNS]
        lines.append("  ".join(f"{c:>18}" for c in cells))
    lines.append("")
    lines.append("response task (RG)")
    header = ["config"] + list(RESPONSE_TABLE_COLUMNS)
    lines.append("  ".join(f"{h:>18}" for h in header))
    for row in matrix.response_rows:
        cells = [row["label"]] + [
            "absent" if not row["present"] else _fmt(row[c]) for c in RESPONSE_TABLE_COLUMNS]
        lines.append("  ".join(f"{c:>18}" for c in cells))
    return "\n".join(lines) + "\n"
