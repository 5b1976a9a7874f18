"""
Benchmark construction: remove rule-inferable triples from a graph, ask one question per removed
triple, complete its answer set from the untouched graph, balance and split.
"""
import json
import logging
import math
import re
import shutil
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from rich.table import Table

from kgbench.errors import (
    CorruptBundle,
    EmptyAnswerSet,
    EmptyCompletion,
    EmptyPlan,
    MalformedLine,
    ValidationFailure,
)
from kgbench.graph import (
    Direction,
    KnowledgeGraph,
    LabelScheme,
    LabelVariant,
    Triple,
    load_graph,
    load_mapping,
    relabel,
    remove,
    write_graph,
    write_mapping,
)
from kgbench.grounding import Grounding, bodies, supported_heads
from kgbench.llm import LabeledTriple, QuestionGenerator, template_fallback
from kgbench.rules import Rule, format_rule, map_constants, structural_checks
from kgbench.taxonomy import RuleType, classify
from kgbench.timer import Timer

logger = logging.getLogger(__name__)


class PlanConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    per_rule_limit: int = Field(default=30, ge=0)
    # None: the first groundings in ascending head order; otherwise a seeded sample
    seed: Optional[int] = Field(default=None, ge=0)


class BalanceConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    tau: float = Field(default=0.05, gt=0, le=1)
    seed: int = Field(default=0, ge=0)


class SplitConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    ratios: tuple[int, int, int] = (8, 1, 1)
    seed: int = Field(default=0, ge=0)

    @field_validator("ratios")
    @classmethod
    def _positive_total(cls, ratios):
        if any(r < 0 for r in ratios) or sum(ratios) <= 0:
            raise ValueError("ratios must be non-negative with a positive sum")
        return ratios


class BuildConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    plan: PlanConfig = PlanConfig()
    balance: BalanceConfig = BalanceConfig()
    split: SplitConfig = SplitConfig()
    direction_seed: int = Field(default=0, ge=0)
    workers: int = Field(default=1, ge=1)


@dataclass(frozen=True)
class Removal:
    head_triple: Triple
    witness: Grounding

    @property
    def rule(self) -> Rule:
        return self.witness.rule


@dataclass(frozen=True)
class RemovalPlan:
    removals: tuple[Removal, ...]

    def __len__(self):
        return len(self.removals)

    def __iter__(self) -> Iterator[Removal]:
        return iter(self.removals)

    @property
    def triples(self) -> list[Triple]:
        return [r.head_triple for r in self.removals]


class QuestionRecord(BaseModel):
    """
    One benchmark question. Entities and predicates are stored as labels, so records stand on
    their own outside the graph they were built from.
    """

    model_config = ConfigDict(frozen=True)

    id: str
    question: str
    topic_entity: str
    answers: list[str]
    hard_answer: str
    predicate: str
    direction: Direction
    rule_type: RuleType
    removed_triple: tuple[str, str, str]
    rule: str
    witness: list[tuple[str, str, str]]

    @model_validator(mode="after")
    def _consistent(self):
        if not self.answers:
            raise ValueError("answers must not be empty")
        if self.hard_answer not in self.answers:
            raise ValueError(f"hard answer {self.hard_answer!r} is not among the answers")
        if self.topic_entity == self.hard_answer:
            raise ValueError("topic entity and hard answer must differ")
        return self


class BundleCounts(BaseModel):
    rules: int
    removed_triples: int
    complete_triples: int
    incomplete_triples: int
    questions_generated: int
    questions_balanced: int
    train: int
    validation: int
    test: int
    template_fallbacks: int
    questions_skipped: int = 0


class BundleManifest(BaseModel):
    preset: Optional[str] = None
    generator: str
    label_scheme: Optional[LabelScheme] = None
    config: BuildConfig
    counts: BundleCounts


@dataclass(frozen=True)
class DatasetBundle:
    complete_graph: KnowledgeGraph
    incomplete_graph: KnowledgeGraph
    train: list[QuestionRecord]
    validation: list[QuestionRecord]
    test: list[QuestionRecord]
    manifest: BundleManifest = field(compare=False)
    # original label -> bundle label, when the bundle was relabeled
    mapping: Optional[dict[str, str]] = field(default=None, compare=False)

    @property
    def splits(self) -> dict[str, list[QuestionRecord]]:
        return {"train": self.train, "validation": self.validation, "test": self.test}

    @property
    def questions(self) -> list[QuestionRecord]:
        return self.train + self.validation + self.test


# Planning


def plan_removals(
    graph: KnowledgeGraph, rules: Sequence[Rule], config: PlanConfig = PlanConfig()
) -> RemovalPlan:
    """
    Greedy removal plan. Rules are visited in the given order; for each, up to
    ``config.per_rule_limit`` supported head triples in ascending order (or a seeded sample of
    them, still visited in ascending order). A head triple is accepted with the smallest body
    grounding for which

    - the head is not already planned and is no body triple of an accepted grounding,
    - the body contains neither an already planned head nor the head itself,
    - the head's subject and object differ.

    Every planned head is then still derivable from ``graph`` minus all planned heads.

    :raises EmptyPlan: no grounding survives.
    """
    if not rules:
        raise EmptyPlan("no rules to plan removals with")
    rng = np.random.default_rng(config.seed) if config.seed is not None else None
    planned: dict[Triple, Removal] = {}
    kept_bodies: set[Triple] = set()
    for rule in rules:
        if not structural_checks(rule):
            logger.warning("skipping %s: not closed, connected and safe", rule)
            continue
        heads = list(supported_heads(rule, graph))
        if rng is not None and len(heads) > config.per_rule_limit:
            chosen = rng.choice(len(heads), size=config.per_rule_limit, replace=False)
            heads = [heads[i] for i in sorted(chosen)]
        else:
            heads = heads[: config.per_rule_limit]
        for head in heads:
            if head.subject == head.object or head in planned or head in kept_bodies:
                continue
            for body in bodies(rule, graph, head):
                if head in body or any(t in planned for t in body):
                    continue
                planned[head] = Removal(head, Grounding(rule, body, head))
                kept_bodies.update(body)
                break
    if not planned:
        raise EmptyPlan()
    logger.info("planned %d removals from %d rules", len(planned), len(rules))
    return RemovalPlan(tuple(planned.values()))


# Questions

YES_NO_STARTERS = frozenset(
    "am is are was were do does did can could will would shall should may might must has have had"
    .split()
)


def _mentions(text: str, label: str) -> bool:
    return re.search(rf"(?<!\w){re.escape(label)}(?!\w)", text) is not None


def validate_question(text: str, topic: str, answer: str) -> str:
    """
    :raises ValidationFailure: ``text`` is empty, does not mention ``topic``, names ``answer`` as a
        standalone token, or reads as a yes/no question.
    """
    if not text.strip():
        raise ValidationFailure(text, "empty question")
    if topic not in text:
        raise ValidationFailure(text, f"does not mention the topic entity {topic!r}")
    if _mentions(text, answer):
        raise ValidationFailure(text, f"names the answer entity {answer!r}")
    first = re.match(r"\W*(\w+)", text)
    if first is not None and first.group(1).lower() in YES_NO_STARTERS:
        raise ValidationFailure(text, "yes/no question")
    return text


def generate_question(
    removed: LabeledTriple,
    direction: Direction,
    generator: QuestionGenerator,
    retry: bool = False,
) -> str:
    """Question text for one end of a labeled removed triple, validated."""
    head, _, tail = removed
    topic, answer = (head, tail) if direction is Direction.HEAD_AS_TOPIC else (tail, head)
    return validate_question(generator.question(removed, direction, retry=retry), topic, answer)


def _question_or_fallback(
    removed: LabeledTriple, direction: Direction, generator: QuestionGenerator
) -> tuple[str, bool]:
    """
    Regenerate once on a rejected question, then fall back to the template.

    :raises ValidationFailure: the template question is rejected too, e.g. because the answer label
        is a word of the topic or predicate label.
    """
    for retry in (False, True):
        try:
            return generate_question(removed, direction, generator, retry=retry), False
        except (ValidationFailure, EmptyCompletion) as e:
            logger.info("question for %s rejected: %s", removed, e)
    head, _, tail = removed
    topic, answer = (head, tail) if direction is Direction.HEAD_AS_TOPIC else (tail, head)
    return validate_question(template_fallback(removed, direction), topic, answer), True


def complete_answers(
    graph: KnowledgeGraph, topic: int, predicate: int, direction: Direction
) -> frozenset[int]:
    """
    Every entity linked to ``topic`` by ``predicate`` in ``graph``, which should be the complete
    graph, on the answer side given by ``direction``.

    :raises EmptyAnswerSet: nothing is linked.
    """
    if direction is Direction.HEAD_AS_TOPIC:
        answers = graph.objects(topic, predicate)
    else:
        answers = graph.subjects(predicate, topic)
    if not answers:
        raise EmptyAnswerSet(
            graph.entity_label(topic), graph.predicate_label(predicate), direction.value
        )
    return frozenset(answers)


# Balancing and splitting


def downsample(
    questions: Sequence[QuestionRecord], config: BalanceConfig = BalanceConfig()
) -> list[QuestionRecord]:
    """
    Cap over-represented hard answers. With ``n = len(questions)``, every hard answer occurring on
    more than ``tau * n`` questions keeps a seeded uniform sample of ``floor(tau * n)`` of them;
    the others keep all. Survivors stay in input order.
    """
    n = len(questions)
    tau = Fraction(str(config.tau))
    cap = math.floor(tau * n)
    by_answer: dict[str, list[int]] = {}
    for i, q in enumerate(questions):
        by_answer.setdefault(q.hard_answer, []).append(i)

    rng = np.random.default_rng(config.seed)
    keep: set[int] = set()
    for answer, indices in by_answer.items():
        if len(indices) > tau * n:
            chosen = rng.choice(len(indices), size=cap, replace=False)
            keep.update(indices[i] for i in chosen)
            logger.debug("hard answer %r: kept %d of %d questions", answer, cap, len(indices))
        else:
            keep.update(indices)
    return [q for i, q in enumerate(questions) if i in keep]


def split(
    questions: Sequence[QuestionRecord], config: SplitConfig = SplitConfig()
) -> tuple[list[QuestionRecord], list[QuestionRecord], list[QuestionRecord]]:
    """Seeded shuffle, then contiguous train/validation/test slices; test takes the remainder."""
    n = len(questions)
    a, b, _ = config.ratios
    total = sum(config.ratios)
    n_train, n_validation = n * a // total, n * b // total
    order = np.random.default_rng(config.seed).permutation(n)
    shuffled = [questions[i] for i in order]
    return (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_validation],
        shuffled[n_train + n_validation :],
    )


# Pipeline


def _relabeled(
    graph: KnowledgeGraph,
    rules: Sequence[Rule],
    scheme: LabelScheme,
    names: Optional[Mapping[str, str]],
) -> tuple[KnowledgeGraph, list[Rule], dict[str, str]]:
    relabeled, mapping = relabel(graph, scheme, names)
    new_id = {
        e: relabeled.entity(mapping[graph.entity_label(e)]) for e in range(graph.entity_count)
    }
    return relabeled, [map_constants(r, new_id) for r in rules], mapping


def build(
    graph: KnowledgeGraph,
    rules: Sequence[Rule],
    config: BuildConfig,
    generator: QuestionGenerator,
    generator_name: str = "template",
    preset: Optional[str] = None,
    label_scheme: Optional[LabelScheme] = None,
    names: Optional[Mapping[str, str]] = None,
    progress: Optional[Callable[[], None]] = None,
) -> DatasetBundle:
    """
    plan_removals -> generate_question -> remove -> complete_answers -> downsample -> split.

    A planned removal whose every question, template included, would name its answer is left in
    the graph and counted in ``manifest.counts.questions_skipped``.

    :param label_scheme: Entity rendering of the whole bundle. Any scheme other than
        ``ENTITY_ID`` relabels ``graph`` (and the constants of ``rules``) before planning, and the
        ``original -> bundle`` label mapping is kept in the bundle.
    :param names: Entity names for the ``TEXT_LABEL`` scheme.
    :param progress: Called once per generated question, possibly from a worker thread.
    """
    mapping = None
    if label_scheme is not None and label_scheme.variant is not LabelVariant.ENTITY_ID:
        graph, rules, mapping = _relabeled(graph, rules, label_scheme, names)

    with Timer("plan removals"):
        plan = plan_removals(graph, rules, config.plan)

    coins = np.random.default_rng(config.direction_seed).integers(0, 2, len(plan))
    directions = [Direction.HEAD_AS_TOPIC if c == 0 else Direction.TAIL_AS_TOPIC for c in coins]
    labeled = [graph.label_triple(r.head_triple) for r in plan]

    def ask(args) -> Optional[tuple[str, bool]]:
        try:
            result = _question_or_fallback(*args, generator)
        except ValidationFailure as e:
            logger.warning("no usable question for %s: %s", args[0], e)
            result = None
        if progress is not None:
            progress()
        return result

    with Timer("generate questions"):
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            asked = list(pool.map(ask, zip(labeled, directions)))

    kept = [(r, d, a) for r, d, a in zip(plan, directions, asked) if a is not None]
    skipped = len(plan) - len(kept)
    if not kept:
        raise EmptyPlan("every planned question would name its answer")
    if skipped:
        logger.warning("%d of %d planned removals skipped: no usable question", skipped, len(plan))
    removed = RemovalPlan(tuple(r for r, _, _ in kept))
    incomplete = remove(graph, removed.triples)
    texts = [a for _, _, a in kept]

    records = []
    for i, (removal, direction, (text, _)) in enumerate(kept, start=1):
        triple = removal.head_triple
        topic, hard = direction.split(triple)
        answers = complete_answers(graph, topic, triple.predicate, direction)
        records.append(
            QuestionRecord(
                id=f"q{i:05d}",
                question=text,
                topic_entity=graph.entity_label(topic),
                answers=[graph.entity_label(e) for e in sorted(answers)],
                hard_answer=graph.entity_label(hard),
                predicate=graph.predicate_label(triple.predicate),
                direction=direction,
                rule_type=classify(removal.rule),
                removed_triple=graph.label_triple(triple),
                rule=format_rule(removal.rule, graph),
                witness=[graph.label_triple(t) for t in removal.witness.body_triples],
            )
        )
    fallbacks = sum(1 for _, used in texts if used)
    if fallbacks:
        logger.warning("%d of %d questions fell back to the template", fallbacks, len(records))

    balanced = downsample(records, config.balance)
    train, validation, test = split(balanced, config.split)
    logger.info(
        "%d questions, %d after balancing: %d/%d/%d",
        len(records),
        len(balanced),
        len(train),
        len(validation),
        len(test),
    )
    manifest = BundleManifest(
        preset=preset,
        generator=generator_name,
        label_scheme=label_scheme,
        config=config,
        counts=BundleCounts(
            rules=len(rules),
            removed_triples=len(removed),
            complete_triples=len(graph),
            incomplete_triples=len(incomplete),
            questions_generated=len(records),
            questions_balanced=len(balanced),
            train=len(train),
            validation=len(validation),
            test=len(test),
            template_fallbacks=fallbacks,
            questions_skipped=skipped,
        ),
    )
    return DatasetBundle(graph, incomplete, train, validation, test, manifest, mapping)


# Bundle files

COMPLETE_FILE = "complete.tsv"
INCOMPLETE_FILE = "incomplete.tsv"
MANIFEST_FILE = "manifest.json"
MAPPING_FILE = "mapping.tsv"
SPLIT_FILES = {"train": "train.jsonl", "validation": "validation.jsonl", "test": "test.jsonl"}


def _write_records(records: Iterable[QuestionRecord], path: Path):
    with path.open("w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(record.model_dump_json() + "\n")


def write_bundle(bundle: DatasetBundle, directory: Path | str) -> None:
    """
    Write the bundle files into ``directory``. They are staged in a sibling ``.partial`` directory
    and moved in only once all of them are written; on failure nothing is left behind.
    """
    directory = Path(directory)
    staging = directory.with_name(directory.name + ".partial")
    if staging.exists():
        shutil.rmtree(staging)
    staging.mkdir(parents=True)
    try:
        with (staging / COMPLETE_FILE).open("w", encoding="utf-8", newline="\n") as f:
            write_graph(bundle.complete_graph, f)
        with (staging / INCOMPLETE_FILE).open("w", encoding="utf-8", newline="\n") as f:
            write_graph(bundle.incomplete_graph, f)
        for name, records in bundle.splits.items():
            _write_records(records, staging / SPLIT_FILES[name])
        if bundle.mapping is not None:
            with (staging / MAPPING_FILE).open("w", encoding="utf-8", newline="\n") as f:
                write_mapping(bundle.mapping, f)
        with (staging / MANIFEST_FILE).open("w", encoding="utf-8", newline="\n") as f:
            f.write(bundle.manifest.model_dump_json(indent=2) + "\n")
        directory.mkdir(parents=True, exist_ok=True)
        for path in sorted(staging.iterdir()):
            path.replace(directory / path.name)
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    logger.info("wrote bundle to %s", directory)


def _read_records(path: Path) -> list[QuestionRecord]:
    records = []
    with path.open(encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(QuestionRecord.model_validate_json(line))
            except ValidationError as e:
                raise CorruptBundle(f"{path.name}, line {line_number}: {e}") from e
    return records


def load_bundle(directory: Path | str) -> DatasetBundle:
    """
    :raises CorruptBundle: a file is missing or unreadable, or the files disagree with each other
        or with the manifest.
    """
    directory = Path(directory)
    try:
        manifest = BundleManifest.model_validate_json(
            (directory / MANIFEST_FILE).read_text(encoding="utf-8")
        )
        with (directory / COMPLETE_FILE).open("rb") as f:
            complete = load_graph(f)
        with (directory / INCOMPLETE_FILE).open("rb") as f:
            incomplete = load_graph(f, vocabulary=complete)
        splits = {name: _read_records(directory / file) for name, file in SPLIT_FILES.items()}
        mapping = None
        scheme = manifest.label_scheme
        if scheme is not None and scheme.variant is not LabelVariant.ENTITY_ID:
            with (directory / MAPPING_FILE).open("rb") as f:
                mapping = load_mapping(f)
    except (OSError, ValidationError, MalformedLine, json.JSONDecodeError) as e:
        raise CorruptBundle(f"{directory}: {e}") from e

    if not incomplete.triples <= complete.triples:
        raise CorruptBundle(f"{directory}: the incomplete graph has triples the complete one lacks")
    ids = Counter(r.id for records in splits.values() for r in records)
    repeated = sorted(i for i, n in ids.items() if n > 1)
    if repeated:
        raise CorruptBundle(f"{directory}: question ids in more than one place: {repeated[:5]}")
    counts = manifest.counts
    found = (len(complete), len(incomplete), *(len(splits[name]) for name in SPLIT_FILES))
    expected = (
        counts.complete_triples,
        counts.incomplete_triples,
        counts.train,
        counts.validation,
        counts.test,
    )
    if found != expected:
        raise CorruptBundle(
            f"{directory}: file sizes {found} disagree with the manifest {expected}"
        )
    return DatasetBundle(complete, incomplete, manifest=manifest, mapping=mapping, **splits)


class DatasetStatistics(BaseModel):
    complete_triples: int
    incomplete_triples: int
    removed_triples: int
    train: int
    validation: int
    test: int

    @property
    def questions(self) -> int:
        return self.train + self.validation + self.test


def dataset_statistics(bundle: DatasetBundle) -> DatasetStatistics:
    return DatasetStatistics(
        complete_triples=len(bundle.complete_graph),
        incomplete_triples=len(bundle.incomplete_graph),
        removed_triples=len(bundle.complete_graph) - len(bundle.incomplete_graph),
        train=len(bundle.train),
        validation=len(bundle.validation),
        test=len(bundle.test),
    )


def statistics_table(statistics: DatasetStatistics, name: str = "") -> Table:
    """Triple counts of both views and question counts per split, one row."""
    table = Table(title="Dataset statistics")
    table.add_column("Dataset")
    for column in ("Complete KG", "Incomplete KG", "Removed", "Train", "Validation", "Test"):
        table.add_column(column, justify="right")
    s = statistics
    table.add_row(
        name,
        *(
            f"{n:,}"
            for n in (
                s.complete_triples,
                s.incomplete_triples,
                s.removed_triples,
                s.train,
                s.validation,
                s.test,
            )
        ),
    )
    return table
