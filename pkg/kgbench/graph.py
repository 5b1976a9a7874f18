"""
In-memory knowledge graph: interned entities and predicates, and six lookup indexes over the
(subject, predicate, object) key combinations. Every other module reads triples through here.

Graphs are immutable. ``remove`` and ``relabel`` return new graphs, so a complete and an
incomplete view of the same data can be held side by side.
"""
import enum
import logging
from collections import Counter, defaultdict
from typing import BinaryIO, Iterable, Iterator, Mapping, NamedTuple, Optional, Sequence, TextIO

import numpy as np
from pydantic import BaseModel, Field

from kgbench.errors import DuplicateLabel, EmptyGraph, MalformedLine, MissingLabel, NotPresent

logger = logging.getLogger(__name__)


class Triple(NamedTuple):
    subject: int
    predicate: int
    object: int


class Direction(str, enum.Enum):
    """Which end of a triple a question is asked about."""

    HEAD_AS_TOPIC = "head-as-topic"
    TAIL_AS_TOPIC = "tail-as-topic"

    def split(self, triple: Triple) -> tuple[int, int]:
        """(topic, answer) of ``triple``."""
        if self is Direction.HEAD_AS_TOPIC:
            return triple.subject, triple.object
        return triple.object, triple.subject


class GraphFormat(enum.Enum):
    TSV = "tsv"


class LabelVariant(str, enum.Enum):
    PRIVATE_ID = "private-id"
    ENTITY_ID = "entity-id"
    TEXT_LABEL = "text-label"


class LabelScheme(BaseModel):
    variant: LabelVariant = LabelVariant.PRIVATE_ID
    seed: int = Field(default=0, ge=0)


_EMPTY: tuple = ()


def _freeze(index: dict) -> dict:
    return {k: tuple(v) for k, v in index.items()}


class KnowledgeGraph:
    def __init__(
        self,
        triples: Iterable[Triple],
        entity_labels: Sequence[Optional[str]],
        predicate_labels: Sequence[str],
    ):
        """
        Build a graph from already-interned ids. Use ``load_graph`` to read a triple file.

        :param triples: Triples over ids ``0..len(entity_labels)-1`` and
            ``0..len(predicate_labels)-1``. Duplicates are collapsed.
        :param entity_labels: External label of each entity id, or ``None`` for unlabeled entities.
        :param predicate_labels: External label of each predicate id.
        :raises DuplicateLabel: two ids share a label.
        """
        self._entity_labels = tuple(entity_labels)
        self._predicate_labels = tuple(predicate_labels)
        self._entity_ids = _invert(self._entity_labels, "entity")
        self._predicate_ids = _invert(self._predicate_labels, "predicate")

        ordered = sorted(set(Triple(*t) for t in triples))
        n_entities, n_predicates = len(self._entity_labels), len(self._predicate_labels)
        for t in ordered:
            if not (
                0 <= t.subject < n_entities
                and 0 <= t.object < n_entities
                and 0 <= t.predicate < n_predicates
            ):
                raise ValueError(f"triple {t} refers to an id outside the entity/predicate tables")
        self._triples = tuple(ordered)
        self._members = frozenset(ordered)
        self._build_indexes()

    @classmethod
    def from_triples(
        cls,
        triples: Iterable[tuple[int, int, int]],
        entity_labels: Optional[Sequence[Optional[str]]] = None,
        predicate_labels: Optional[Sequence[str]] = None,
    ) -> "KnowledgeGraph":
        """
        Convenience constructor for id triples. Missing tables are sized to the largest id seen,
        with entities left unlabeled and predicates labeled by their id.
        """
        triples = [Triple(*t) for t in triples]
        if entity_labels is None:
            n = 1 + max((max(t.subject, t.object) for t in triples), default=-1)
            entity_labels = [None] * n
        if predicate_labels is None:
            n = 1 + max((t.predicate for t in triples), default=-1)
            predicate_labels = [str(i) for i in range(n)]
        return cls(triples, entity_labels, predicate_labels)

    def _build_indexes(self):
        by_s, by_p, by_o = defaultdict(list), defaultdict(list), defaultdict(list)
        by_sp, by_po, by_so = defaultdict(list), defaultdict(list), defaultdict(list)
        for t in self._triples:  # ascending, so every index list comes out sorted
            s, p, o = t
            by_s[s].append(t)
            by_p[p].append(t)
            by_o[o].append(t)
            by_sp[s, p].append(t)
            by_po[p, o].append(t)
            by_so[s, o].append(t)
        self._by_s, self._by_p, self._by_o = _freeze(by_s), _freeze(by_p), _freeze(by_o)
        self._by_sp, self._by_po, self._by_so = _freeze(by_sp), _freeze(by_po), _freeze(by_so)

        # Projections the grounding engine asks for in its inner loops
        self._objects = {k: tuple(t.object for t in v) for k, v in self._by_sp.items()}
        self._subjects = {k: tuple(t.subject for t in v) for k, v in self._by_po.items()}
        self._pairs = {p: tuple((t.subject, t.object) for t in v) for p, v in self._by_p.items()}
        self._between = {k: tuple(t.predicate for t in v) for k, v in self._by_so.items()}
        self._out_predicates = {
            e: tuple(sorted({t.predicate for t in v})) for e, v in self._by_s.items()
        }
        self._in_predicates = {
            e: tuple(sorted({t.predicate for t in v})) for e, v in self._by_o.items()
        }

    # Size and membership

    def __len__(self) -> int:
        return len(self._triples)

    def __iter__(self) -> Iterator[Triple]:
        return iter(self._triples)

    def __contains__(self, triple) -> bool:
        return triple in self._members

    def __eq__(self, other) -> bool:
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return (
            self._triples == other._triples
            and self._entity_labels == other._entity_labels
            and self._predicate_labels == other._predicate_labels
        )

    def __repr__(self):
        return (
            f"KnowledgeGraph({len(self)} triples, {self.entity_count} entities, "
            f"{self.predicate_count} predicates)"
        )

    @property
    def triples(self) -> frozenset[Triple]:
        return self._members

    @property
    def entity_count(self) -> int:
        return len(self._entity_labels)

    @property
    def predicate_count(self) -> int:
        return len(self._predicate_labels)

    # Interning tables

    def entity_label(self, entity: int) -> str:
        """External label of ``entity``; unlabeled entities render as their id."""
        label = self._entity_labels[entity]
        return str(entity) if label is None else label

    def has_entity_label(self, entity: int) -> bool:
        return self._entity_labels[entity] is not None

    def predicate_label(self, predicate: int) -> str:
        return self._predicate_labels[predicate]

    @property
    def entity_labels(self) -> tuple[Optional[str], ...]:
        return self._entity_labels

    @property
    def predicate_labels(self) -> tuple[str, ...]:
        return self._predicate_labels

    def entity(self, label: str) -> int:
        """Id of the entity labeled ``label``; unlabeled entities answer to their rendered id."""
        found = self._entity_ids.get(label)
        if found is not None:
            return found
        if label.isdigit() and int(label) < self.entity_count:
            if not self.has_entity_label(int(label)):
                return int(label)
        raise MissingLabel(label)

    def predicate(self, label: str) -> int:
        try:
            return self._predicate_ids[label]
        except KeyError:
            raise MissingLabel(label) from None

    def label_triple(self, triple: Triple) -> tuple[str, str, str]:
        s, p, o = triple
        return self.entity_label(s), self.predicate_label(p), self.entity_label(o)

    # Pattern queries

    def match(
        self,
        subject: Optional[int] = None,
        predicate: Optional[int] = None,
        object: Optional[int] = None,
    ) -> Iterator[Triple]:
        """
        Triples matching every bound field, in ascending (subject, predicate, object) order.
        ``None`` is a wildcard. Unknown ids simply match nothing.
        """
        bound = (subject is not None, predicate is not None, object is not None)
        if bound == (True, True, True):
            t = Triple(subject, predicate, object)
            hits = (t,) if t in self._members else _EMPTY
        elif bound == (True, True, False):
            hits = self._by_sp.get((subject, predicate), _EMPTY)
        elif bound == (False, True, True):
            hits = self._by_po.get((predicate, object), _EMPTY)
        elif bound == (True, False, True):
            hits = self._by_so.get((subject, object), _EMPTY)
        elif bound == (True, False, False):
            hits = self._by_s.get(subject, _EMPTY)
        elif bound == (False, True, False):
            hits = self._by_p.get(predicate, _EMPTY)
        elif bound == (False, False, True):
            hits = self._by_o.get(object, _EMPTY)
        else:
            hits = self._triples
        return iter(hits)

    def objects(self, subject: int, predicate: int) -> tuple[int, ...]:
        return self._objects.get((subject, predicate), _EMPTY)

    def subjects(self, predicate: int, object: int) -> tuple[int, ...]:
        return self._subjects.get((predicate, object), _EMPTY)

    def facts(self, predicate: int) -> tuple[tuple[int, int], ...]:
        """(subject, object) pairs of ``predicate``, ascending."""
        return self._pairs.get(predicate, _EMPTY)

    def count(self, predicate: int) -> int:
        return len(self._pairs.get(predicate, _EMPTY))

    def predicates_between(self, subject: int, object: int) -> tuple[int, ...]:
        return self._between.get((subject, object), _EMPTY)

    def out_predicates(self, entity: int) -> tuple[int, ...]:
        return self._out_predicates.get(entity, _EMPTY)

    def in_predicates(self, entity: int) -> tuple[int, ...]:
        return self._in_predicates.get(entity, _EMPTY)

    def used_predicates(self) -> list[int]:
        """Predicates with at least one fact, ascending."""
        return sorted(self._by_p)

    def has(self, subject: int, predicate: int, object: int) -> bool:
        return Triple(subject, predicate, object) in self._members


def _invert(labels: Sequence[Optional[str]], kind: str) -> dict[str, int]:
    inverse = {}
    for i, label in enumerate(labels):
        if label is None:
            continue
        if label in inverse:
            raise DuplicateLabel(kind, label, inverse[label], i)
        inverse[label] = i
    return inverse


def _text_lines(source: BinaryIO | TextIO) -> Iterator[str]:
    for raw in source:
        yield raw.decode("utf-8") if isinstance(raw, bytes) else raw


def load_graph(
    source: BinaryIO | TextIO,
    format: GraphFormat = GraphFormat.TSV,
    vocabulary: Optional["KnowledgeGraph"] = None,
) -> KnowledgeGraph:
    """
    Read ``subject<TAB>predicate<TAB>object`` lines (UTF-8, no header). Entities and predicates are
    interned in order of first appearance; repeated lines are collapsed. Blank lines are skipped.

    :param vocabulary: Resolve labels against this graph's tables instead, so the result shares its
        ids (the incomplete view of a bundle is read this way). An empty stream is then allowed.
    :raises MalformedLine: a line does not have exactly three non-empty fields, or uses a label
        unknown to ``vocabulary``.
    :raises EmptyGraph: the stream holds no triples.
    """
    if format is not GraphFormat.TSV:
        raise ValueError(f"unsupported graph format {format!r}")
    entity_ids: dict[str, int] = {}
    predicate_ids: dict[str, int] = {}
    triples = []
    for line_number, line in enumerate(_text_lines(source), start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3 or not all(fields):
            raise MalformedLine(line_number)
        s, p, o = fields
        if vocabulary is not None:
            try:
                triples.append(
                    Triple(vocabulary.entity(s), vocabulary.predicate(p), vocabulary.entity(o))
                )
            except MissingLabel as e:
                raise MalformedLine(line_number, str(e)) from e
            continue
        triples.append(
            Triple(
                entity_ids.setdefault(s, len(entity_ids)),
                predicate_ids.setdefault(p, len(predicate_ids)),
                entity_ids.setdefault(o, len(entity_ids)),
            )
        )
    if vocabulary is not None:
        graph = KnowledgeGraph(triples, vocabulary.entity_labels, vocabulary.predicate_labels)
    elif not triples:
        raise EmptyGraph()
    else:
        graph = KnowledgeGraph(triples, list(entity_ids), list(predicate_ids))
    logger.info(
        "loaded %d triples (%d lines) over %d entities and %d predicates",
        len(graph),
        len(triples),
        graph.entity_count,
        graph.predicate_count,
    )
    return graph


def write_graph(graph: KnowledgeGraph, stream: TextIO) -> None:
    """Write ``graph`` in the triple file format, ascending by (subject, predicate, object) id."""
    for triple in graph:
        stream.write("\t".join(graph.label_triple(triple)) + "\n")


def remove(graph: KnowledgeGraph, victims: Iterable[Triple]) -> KnowledgeGraph:
    """
    New graph without ``victims``. Entity and predicate tables are kept as they are, so ids stay
    valid across the complete and the incomplete view.

    :raises NotPresent: a victim is not in ``graph`` (the smallest such triple is reported).
    """
    victims = set(Triple(*v) for v in victims)
    absent = sorted(v for v in victims if v not in graph)
    if absent:
        raise NotPresent(absent[0])
    if not victims:
        return graph
    return KnowledgeGraph(
        (t for t in graph if t not in victims), graph.entity_labels, graph.predicate_labels
    )


def relabel(
    graph: KnowledgeGraph,
    scheme: LabelScheme,
    names: Optional[Mapping[str, str]] = None,
) -> tuple[KnowledgeGraph, dict[str, str]]:
    """
    Re-render entity labels under ``scheme``; predicates keep their labels.

    - ``PRIVATE_ID``: a seeded random permutation assigns every entity a fresh opaque index, which
      becomes both its id and its label.
    - ``ENTITY_ID``: the raw dataset identifiers, unchanged.
    - ``TEXT_LABEL``: the human-readable name from ``names`` (raw label -> text). Names shared by
      several entities get the raw label appended, as often as it takes to be unique, so the
      mapping stays a bijection.

    :return: The relabeled graph and the ``old label -> new label`` mapping.
    :raises MissingLabel: ``TEXT_LABEL`` and some entity has no name.
    """
    old = [graph.entity_label(e) for e in range(graph.entity_count)]

    if scheme.variant is LabelVariant.PRIVATE_ID:
        permutation = np.random.default_rng(scheme.seed).permutation(graph.entity_count)
        new_id = [int(i) for i in permutation]
        new_labels: list[Optional[str]] = [None] * graph.entity_count
        for e, i in enumerate(new_id):
            new_labels[i] = str(i)
        triples = [Triple(new_id[s], p, new_id[o]) for s, p, o in graph]
        relabeled = KnowledgeGraph(triples, new_labels, graph.predicate_labels)
        return relabeled, {old[e]: str(new_id[e]) for e in range(graph.entity_count)}

    if scheme.variant is LabelVariant.ENTITY_ID:
        relabeled = KnowledgeGraph(graph, old, graph.predicate_labels)
        return relabeled, {label: label for label in old}

    names = names or {}
    texts = []
    for e, label in enumerate(old):
        if not graph.has_entity_label(e) or label not in names:
            raise MissingLabel(label)
        texts.append(names[label])
    shared = {text for text, n in Counter(texts).items() if n > 1}
    taken = set(texts)
    new_labels = []
    for text, label in zip(texts, old):
        if text in shared:
            text = f"{text} ({label})"
            while text in taken:
                text = f"{text} ({label})"
            taken.add(text)
        new_labels.append(text)
    relabeled = KnowledgeGraph(graph, new_labels, graph.predicate_labels)
    return relabeled, dict(zip(old, new_labels))


def _read_pairs(source: BinaryIO | TextIO) -> Iterator[tuple[str, str]]:
    for line_number, line in enumerate(_text_lines(source), start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise MalformedLine(line_number, "expected exactly two TAB-separated fields")
        yield fields[0], fields[1]


def load_labels(source: BinaryIO | TextIO) -> dict[str, str]:
    """Entity names, one ``raw label<TAB>text`` pair per line. Later lines win."""
    return dict(_read_pairs(source))


def load_mapping(source: BinaryIO | TextIO) -> dict[str, str]:
    return dict(_read_pairs(source))


def write_mapping(mapping: Mapping[str, str], stream: TextIO) -> None:
    for old, new in mapping.items():
        stream.write(f"{old}\t{new}\n")
