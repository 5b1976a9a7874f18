"""
Independent check of a built bundle: re-derive each removed triple from the incomplete graph in
one forward-chaining step of its witness rule.

Everything here works on label triples and plain set lookups, and parses rule text itself, so a
fault in the grounding engine or the rule module cannot hide itself.
"""
import logging
import re
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Optional

from kgbench.bench import DatasetBundle
from kgbench.graph import Direction

logger = logging.getLogger(__name__)

LabelTriple = tuple[str, str, str]
_ATOM = re.compile(r"^(.+)\(([^,()]+),([^,()]+)\)$")


def _parse(rule_text: str) -> tuple[list[LabelTriple], LabelTriple]:
    body_text, head_text = rule_text.rsplit("=>", 1)

    def atom(text: str) -> LabelTriple:
        found = _ATOM.match(text.strip())
        if found is None:
            raise ValueError(f"not an atom: {text!r}")
        predicate, subject, object_ = found.groups()
        return subject.strip(), predicate, object_.strip()

    body = [atom(a) for a in body_text.split(" & ") if a.strip()]
    return body, atom(head_text)


def _is_variable(term: str) -> bool:
    return term.startswith("?")


class ForwardChainer:
    def __init__(self, triples: Iterable[LabelTriple]):
        self.triples = frozenset(tuple(t) for t in triples)
        self._by_predicate = defaultdict(list)
        for t in self.triples:
            self._by_predicate[t[1]].append(t)

    def _match(self, pattern: LabelTriple, fact: LabelTriple, binding: dict) -> Optional[dict]:
        extended = dict(binding)
        for term, value in ((pattern[0], fact[0]), (pattern[2], fact[2])):
            if _is_variable(term):
                if extended.setdefault(term, value) != value:
                    return None
            elif term != value:
                return None
        return extended

    def _search(self, atoms: list[LabelTriple], binding: dict) -> bool:
        if not atoms:
            return True
        # prefer an atom with a bound end
        atoms = sorted(atoms, key=lambda a: not any(t in binding for t in (a[0], a[2])))
        pattern, rest = atoms[0], atoms[1:]
        for fact in self._by_predicate.get(pattern[1], ()):
            extended = self._match(pattern, fact, binding)
            if extended is not None and self._search(rest, extended):
                return True
        return False

    def derives(self, rule_text: str, target: LabelTriple) -> bool:
        """Whether ``rule_text`` concludes ``target`` from these triples in a single step."""
        body, head = _parse(rule_text)
        if head[1] != target[1]:
            return False
        binding = self._match(head, target, {})
        return binding is not None and self._search(body, binding)


@dataclass(frozen=True)
class Finding:
    question_id: str
    problem: str


def verify_bundle(bundle: DatasetBundle) -> list[Finding]:
    """
    Per question: the removed triple is in the complete graph and not in the incomplete one, its
    witness body is wholly in the incomplete graph, the witness rule re-derives it from there, and
    the answer set is exactly what the complete graph links to the topic.
    """
    complete = {bundle.complete_graph.label_triple(t) for t in bundle.complete_graph}
    incomplete = {bundle.incomplete_graph.label_triple(t) for t in bundle.incomplete_graph}
    chainer = ForwardChainer(incomplete)
    answers_of: dict[tuple[str, str, bool], set[str]] = defaultdict(set)
    for s, p, o in complete:
        answers_of[s, p, True].add(o)
        answers_of[o, p, False].add(s)

    findings = []
    for record in bundle.questions:
        problems = []
        removed = tuple(record.removed_triple)
        if removed not in complete:
            problems.append("removed triple is not in the complete graph")
        if removed in incomplete:
            problems.append("removed triple is still in the incomplete graph")
        missing = [tuple(t) for t in record.witness if tuple(t) not in incomplete]
        if missing:
            problems.append(f"witness body triples missing from the incomplete graph: {missing}")
        try:
            if not chainer.derives(record.rule, removed):
                problems.append(f"{record.rule} does not re-derive the removed triple")
        except ValueError as e:
            problems.append(f"unreadable rule: {e}")
        head_is_topic = record.direction is Direction.HEAD_AS_TOPIC
        expected = answers_of.get((record.topic_entity, record.predicate, head_is_topic), set())
        if set(record.answers) != expected:
            problems.append("answer set differs from the complete graph")
        findings.extend(Finding(record.id, p) for p in problems)

    logger.info("verified %d questions: %d problems", len(bundle.questions), len(findings))
    return findings
