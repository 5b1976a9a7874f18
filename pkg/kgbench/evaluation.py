"""
Scoring of a system's raw answers against benchmark questions.

Raw output is split into fragments, each fragment normalized, and the resulting set compared by
exact match with the normalized gold answers. Corpus metrics are unweighted means over questions;
the hard-hit ratio is the ratio of the two hit rates.
"""
import enum
import json
import logging
import re
import string
from collections import defaultdict
from dataclasses import dataclass
from typing import AbstractSet, Iterable, Iterator, Mapping, Optional, Sequence, TextIO

from pydantic import BaseModel, ConfigDict
from rich.table import Table

from kgbench.bench import QuestionRecord
from kgbench.errors import (
    DuplicatePrediction,
    EmptyInput,
    HardNotInGold,
    MissingLabel,
    UnknownQuestionId,
)
from kgbench.taxonomy import RuleType

logger = logging.getLogger(__name__)

DELIMITERS = re.compile(r"[,;\n]")
DELIMITERS_AND_SPACES = re.compile(r"[,;\s]")
DELIMITER_NOTE = (
    "answers are split on commas, semicolons and newlines; spaces only when split_on_space is set, "
    "since multi-word labels would otherwise break apart"
)

_ARTICLES = frozenset({"a", "an", "the"})
_PUNCTUATION = str.maketrans("", "", string.punctuation)


class EmptyPrecision(str, enum.Enum):
    # an empty prediction counts as precision 0
    ZERO = "zero"
    # an empty prediction is left out of the precision mean
    SKIP = "skip"


class EvalConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    split_on_space: bool = False
    empty_precision: EmptyPrecision = EmptyPrecision.ZERO


class RawPrediction(BaseModel):
    question_id: str
    raw_text: str


def parse_predictions(raw: str, split_on_space: bool = False) -> list[str]:
    """Fragments of ``raw`` between delimiters, trimmed, empty ones dropped."""
    pattern = DELIMITERS_AND_SPACES if split_on_space else DELIMITERS
    return [p.strip() for p in pattern.split(raw) if p.strip()]


def normalize(s: str) -> str:
    s = s.lower().replace("<pad>", " ")
    s = s.translate(_PUNCTUATION)
    return " ".join(w for w in s.split() if w not in _ARTICLES)


def prediction_set(raw: str, split_on_space: bool = False) -> frozenset[str]:
    normalized = (normalize(p) for p in parse_predictions(raw, split_on_space))
    return frozenset(p for p in normalized if p)


@dataclass(frozen=True)
class PerQuestionScore:
    hit_any: bool
    hit_hard: bool
    precision: float
    recall: float
    f1: float
    answer_set_size: int
    prediction_size: int
    # no prediction row at all, as opposed to an empty one
    missing: bool = False


def score_question(
    prediction: AbstractSet[str], gold: AbstractSet[str], hard: str
) -> PerQuestionScore:
    """
    Set-based scores of one question. An empty prediction has precision 0.

    :raises HardNotInGold: ``hard`` is not one of ``gold``.
    """
    if hard not in gold:
        raise HardNotInGold(hard)
    common = len(prediction & gold)
    return PerQuestionScore(
        hit_any=common > 0,
        hit_hard=hard in prediction,
        precision=common / len(prediction) if prediction else 0.0,
        recall=common / len(gold),
        f1=2 * common / (len(prediction) + len(gold)),
        answer_set_size=len(gold),
        prediction_size=len(prediction),
    )


class MetricsSummary(BaseModel):
    question_count: int
    hits_any: float
    precision: float
    recall: float
    f1: float
    hits_hard: float
    # None when no question was hit at all
    hhr: Optional[float]


class MetricsReport(MetricsSummary):
    per_rule_type: dict[RuleType, MetricsSummary] = {}
    missing_predictions: int = 0
    label_scheme: Optional[str] = None
    config: EvalConfig = EvalConfig()
    delimiters: str = DELIMITER_NOTE


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def _summarize(scores: Sequence[PerQuestionScore], config: EvalConfig) -> MetricsSummary:
    if config.empty_precision is EmptyPrecision.SKIP:
        precisions = [s.precision for s in scores if s.prediction_size > 0 or s.missing]
    else:
        precisions = [s.precision for s in scores]
    hits_any = _mean([float(s.hit_any) for s in scores])
    hits_hard = _mean([float(s.hit_hard) for s in scores])
    return MetricsSummary(
        question_count=len(scores),
        hits_any=hits_any,
        precision=_mean(precisions),
        recall=_mean([s.recall for s in scores]),
        f1=_mean([s.f1 for s in scores]),
        hits_hard=hits_hard,
        hhr=hits_hard / hits_any if hits_any > 0 else None,
    )


def aggregate(
    scores: Sequence[PerQuestionScore],
    metadata: Sequence[QuestionRecord],
    config: EvalConfig = EvalConfig(),
) -> MetricsReport:
    """
    Corpus metrics, and the same metrics per rule type.

    :param metadata: The question of each score, in the same order.
    :raises EmptyInput: no scores.
    """
    if not scores:
        raise EmptyInput()
    if len(scores) != len(metadata):
        raise ValueError(f"{len(scores)} scores for {len(metadata)} questions")
    by_type: dict[RuleType, list[PerQuestionScore]] = defaultdict(list)
    for score, record in zip(scores, metadata):
        by_type[record.rule_type].append(score)
    per_rule_type = {t: _summarize(by_type[t], config) for t in RuleType if t in by_type}
    return MetricsReport(
        **_summarize(scores, config).model_dump(),
        per_rule_type=per_rule_type,
        config=config,
    )


def evaluate_run(
    questions: Sequence[QuestionRecord],
    predictions: Iterable[RawPrediction],
    config: EvalConfig = EvalConfig(),
    label_mapping: Optional[Mapping[str, str]] = None,
    label_scheme: Optional[str] = None,
) -> MetricsReport:
    """
    Score a run over ``questions``. Questions without a prediction row score zero on every
    per-question metric (precision included, whatever ``config.empty_precision`` says).

    :param label_mapping: Old label -> new label, for runs made against a relabeled graph; gold
        answers are mapped through it before normalization.
    :raises UnknownQuestionId: predictions for questions not in ``questions``.
    :raises DuplicatePrediction: two rows for one question.
    """
    by_id = {q.id: q for q in questions}
    raw_by_id: dict[str, str] = {}
    unknown = []
    for p in predictions:
        if p.question_id not in by_id:
            unknown.append(p.question_id)
        elif p.question_id in raw_by_id:
            raise DuplicatePrediction(p.question_id)
        else:
            raw_by_id[p.question_id] = p.raw_text
    if unknown:
        raise UnknownQuestionId(set(unknown))

    def render(label: str) -> str:
        if label_mapping is None:
            return label
        try:
            return label_mapping[label]
        except KeyError:
            raise MissingLabel(label) from None

    scores = []
    missing = 0
    for q in questions:
        gold = frozenset(normalize(render(a)) for a in q.answers)
        hard = normalize(render(q.hard_answer))
        raw = raw_by_id.get(q.id)
        if raw is None:
            missing += 1
            scores.append(PerQuestionScore(False, False, 0.0, 0.0, 0.0, len(gold), 0, missing=True))
            continue
        scores.append(score_question(prediction_set(raw, config.split_on_space), gold, hard))
    if missing:
        logger.warning(
            "%d of %d questions have no prediction; scored as zero", missing, len(scores)
        )

    report = aggregate(scores, questions, config)
    return report.model_copy(update={"missing_predictions": missing, "label_scheme": label_scheme})


_ESCAPES = re.compile(r"\\(.)")


def _unescape(text: str) -> str:
    return _ESCAPES.sub(lambda m: {"n": "\n", "t": "\t"}.get(m.group(1), m.group(1)), text)


def load_predictions(stream: TextIO) -> Iterator[RawPrediction]:
    """
    ``question_id<TAB>raw_text`` rows. In the raw text ``\\n`` and ``\\t`` stand for a newline and
    a tab, and ``\\\\`` for a backslash. A row with only an id is an empty answer.
    """
    for line in stream:
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        question_id, _, raw = line.partition("\t")
        yield RawPrediction(question_id=question_id.strip(), raw_text=_unescape(raw))


def write_report(report: MetricsReport, stream: TextIO) -> None:
    stream.write(json.dumps(report.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")


def _format(value: Optional[float]) -> str:
    return "undefined" if value is None else f"{value:.4f}"


def render_summary(report: MetricsReport) -> Table:
    table = Table(title=f"{report.question_count} questions")
    table.add_column("Metric")
    table.add_column("Value", justify="right")
    table.add_row("Hits@Any", _format(report.hits_any))
    table.add_row("Precision", _format(report.precision))
    table.add_row("Recall", _format(report.recall))
    table.add_row("F1", _format(report.f1))
    table.add_row("Hits@Hard", _format(report.hits_hard))
    table.add_row("HHR", _format(report.hhr))
    if report.missing_predictions:
        table.add_section()
        table.add_row("Missing predictions", str(report.missing_predictions))
    return table


def render_rule_types(report: MetricsReport) -> Table:
    table = Table(title="By rule type")
    for column in ("Rule type", "Questions", "Hits@Any", "Hits@Hard", "HHR"):
        table.add_column(column, justify="left" if column == "Rule type" else "right")
    for rule_type, summary in report.per_rule_type.items():
        table.add_row(
            rule_type.value,
            str(summary.question_count),
            _format(summary.hits_any),
            _format(summary.hits_hard),
            _format(summary.hhr),
        )
    return table
