"""
Horn rules ``B1 & ... & Bn => H`` over binary atoms, their structural properties, a canonical
form that identifies rules up to variable renaming, and the rule file format.
"""
import re
from dataclasses import dataclass, field, replace
from fractions import Fraction
from itertools import permutations
from typing import Iterable, Mapping, NamedTuple, Optional, TextIO, Union

from kgbench.errors import MalformedLine, MissingLabel
from kgbench.graph import KnowledgeGraph, Triple


@dataclass(frozen=True, order=True, slots=True)
class Var:
    index: int

    def __repr__(self):
        return f"?{self.index}"


Term = Union[Var, int]
Substitution = Mapping[Var, int]

# Canonical rules always use these two for the head subject and object
X, Y = Var(0), Var(1)


def term_key(term: Term) -> tuple[int, int]:
    return (0, term.index) if isinstance(term, Var) else (1, term)


@dataclass(frozen=True, slots=True)
class Atom:
    predicate: int
    subject: Term
    object: Term

    @property
    def terms(self) -> tuple[Term, Term]:
        return self.subject, self.object

    @property
    def variables(self) -> tuple[Var, ...]:
        return tuple(dict.fromkeys(t for t in self.terms if isinstance(t, Var)))

    @property
    def key(self) -> tuple:
        return self.predicate, term_key(self.subject), term_key(self.object)

    def rename(self, mapping: Mapping[Var, Term]) -> "Atom":
        return Atom(
            self.predicate,
            mapping.get(self.subject, self.subject),
            mapping.get(self.object, self.object),
        )

    def ground(self, substitution: Substitution) -> Triple:
        s, o = self.subject, self.object
        return Triple(
            substitution[s] if isinstance(s, Var) else s,
            self.predicate,
            substitution[o] if isinstance(o, Var) else o,
        )


@dataclass(frozen=True)
class Measures:
    """
    Quality counts of a rule. Ratios are exact fractions, ``None`` where the denominator is zero
    (or was not computed, for rules that are not closed).
    """

    support: int
    head_facts: int
    body_groundings: Optional[int] = None
    pca_body_groundings: Optional[int] = None

    @property
    def head_coverage(self) -> Optional[Fraction]:
        return Fraction(self.support, self.head_facts) if self.head_facts else None

    @property
    def confidence(self) -> Optional[Fraction]:
        return Fraction(self.support, self.body_groundings) if self.body_groundings else None

    @property
    def pca_confidence(self) -> Optional[Fraction]:
        if not self.pca_body_groundings:
            return None
        return Fraction(self.support, self.pca_body_groundings)


class StructuralChecks(NamedTuple):
    closed: bool
    connected: bool
    safe: bool

    def __bool__(self):
        return self.closed and self.connected and self.safe


@dataclass(frozen=True)
class Rule:
    body: tuple[Atom, ...]
    head: Atom
    measures: Optional[Measures] = field(default=None, compare=False, hash=False)

    def __len__(self):
        return len(self.body) + 1

    @property
    def atoms(self) -> tuple[Atom, ...]:
        return self.body + (self.head,)

    @property
    def variables(self) -> tuple[Var, ...]:
        return tuple(dict.fromkeys(v for a in self.atoms for v in a.variables))

    @property
    def head_variables(self) -> tuple[Var, ...]:
        return self.head.variables

    @property
    def fresh_variables(self) -> tuple[Var, ...]:
        head = set(self.head.variables)
        return tuple(v for v in self.variables if v not in head)

    @property
    def sort_key(self) -> tuple:
        return self.head.predicate, tuple(a.key for a in self.body)

    def with_measures(self, measures: Measures) -> "Rule":
        return replace(self, measures=measures)

    def extend(self, atom: Atom) -> "Rule":
        return canonical(Rule(self.body + (atom,), self.head))

    def __str__(self):
        return format_rule(self)


def canonical(rule: Rule) -> Rule:
    """
    The representative of ``rule`` modulo variable renaming: head becomes ``h(?0, ?1)``, the other
    variables are numbered from 2 in the order that makes the sorted body smallest. Two rules are
    alpha-equivalent iff their canonical forms are equal. Measures are carried over.
    """
    head_map: dict[Var, Term] = {}
    for term, target in zip(rule.head.terms, (X, Y)):
        if isinstance(term, Var):
            head_map.setdefault(term, target)
    fresh = [v for v in rule.variables if v not in head_map]
    best_key, best_body = None, None
    for order in permutations(range(2, 2 + len(fresh))):
        mapping = dict(head_map)
        mapping.update({v: Var(i) for v, i in zip(fresh, order)})
        body = tuple(sorted((a.rename(mapping) for a in rule.body), key=lambda a: a.key))
        key = tuple(a.key for a in body)
        if best_key is None or key < best_key:
            best_key, best_body = key, body
    return Rule(best_body, rule.head.rename(head_map), rule.measures)


def structural_checks(rule: Rule) -> StructuralChecks:
    """
    - closed: every variable occurs in at least two atoms;
    - connected: the atoms form one component when atoms sharing a variable or constant are linked;
    - safe: every head variable occurs in the body.
    """
    atoms = rule.atoms
    closed = all(sum(v in a.variables for a in atoms) >= 2 for v in rule.variables)

    parent = list(range(len(atoms)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    first_seen: dict = {}
    for i, a in enumerate(atoms):
        for term in set(a.terms):
            j = first_seen.setdefault(term_key(term), i)
            parent[find(i)] = find(j)
    connected = len({find(i) for i in range(len(atoms))}) == 1

    body_variables = {v for a in rule.body for v in a.variables}
    safe = set(rule.head.variables) <= body_variables
    return StructuralChecks(closed, connected, safe)


def is_sub_body(small: Rule, big: Rule) -> bool:
    """
    Whether ``small`` has the same head as ``big`` and its body is a proper subset of ``big``'s body
    under some renaming of the non-head variables. Both rules must be canonical.
    """
    if small.head != big.head or len(small.body) >= len(big.body):
        return False
    target = set(big.body)
    small_fresh = small.fresh_variables
    for image in permutations(big.fresh_variables, len(small_fresh)):
        mapping = dict(zip(small_fresh, image))
        if all(a.rename(mapping) in target for a in small.body):
            return True
    return False



def map_constants(rule: Rule, new_id: Mapping[int, int]) -> Rule:
    """``rule`` with every constant ``c`` replaced by ``new_id[c]``, canonical again."""

    def atom(a: Atom) -> Atom:
        s, o = a.subject, a.object
        return Atom(
            a.predicate,
            s if isinstance(s, Var) else new_id[s],
            o if isinstance(o, Var) else new_id[o],
        )

    return canonical(Rule(tuple(atom(a) for a in rule.body), atom(rule.head), rule.measures))


# Rule file format:  p(?a,?b) & q(?b,?c) => r(?a,?c) <TAB> support <TAB> hc <TAB> conf <TAB> pca


def format_rule(rule: Rule, graph: Optional[KnowledgeGraph] = None) -> str:
    """
    Render ``rule`` with variables lettered ``?a, ?b, ...`` by first appearance, reading the body
    and then the head. With a graph, predicates and constants print as their labels.
    """
    letters: dict[Var, str] = {}

    def term(t: Term) -> str:
        if isinstance(t, Var):
            return "?" + letters.setdefault(t, _letter(len(letters)))
        return graph.entity_label(t) if graph is not None else str(t)

    def atom(a: Atom) -> str:
        predicate = graph.predicate_label(a.predicate) if graph is not None else str(a.predicate)
        return f"{predicate}({term(a.subject)},{term(a.object)})"

    body = " & ".join(atom(a) for a in rule.body)
    return f"{body} => {atom(rule.head)}".lstrip()


def _letter(i: int) -> str:
    letters = ""
    while True:
        letters = chr(ord("a") + i % 26) + letters
        i = i // 26 - 1
        if i < 0:
            return letters


def _decimal(value: Optional[Fraction]) -> str:
    return "nan" if value is None else f"{float(value):.6f}"


def write_rules(rules: Iterable[Rule], stream: TextIO, graph: KnowledgeGraph, header: str = ""):
    stream.write(header)
    for rule in rules:
        m = rule.measures
        columns = [format_rule(rule, graph)]
        if m is not None:
            columns += [
                str(m.support),
                _decimal(m.head_coverage),
                _decimal(m.confidence),
                _decimal(m.pca_confidence),
            ]
        stream.write("\t".join(columns) + "\n")


_ATOM = re.compile(r"^(?P<predicate>.+)\((?P<subject>[^,()]+),(?P<object>[^,()]+)\)$")


def parse_rule(text: str, graph: KnowledgeGraph) -> Rule:
    """
    Inverse of ``format_rule`` with a graph: predicate and constant labels are resolved against
    ``graph``. The result is canonical.

    :raises ValueError: the text is not a rule.
    :raises MissingLabel: a predicate or constant is unknown to ``graph``.
    """
    if " => " not in text and not text.startswith("=> "):
        raise ValueError(f"no ' => ' in {text!r}")
    body_text, head_text = text.rsplit("=>", 1)
    variables: dict[str, Var] = {}

    def term(t: str) -> Term:
        t = t.strip()
        if t.startswith("?"):
            return variables.setdefault(t, Var(len(variables)))
        return graph.entity(t)

    def atom(a: str) -> Atom:
        found = _ATOM.match(a.strip())
        if found is None:
            raise ValueError(f"not an atom: {a!r}")
        return Atom(
            graph.predicate(found["predicate"]), term(found["subject"]), term(found["object"])
        )

    body = tuple(atom(a) for a in body_text.split(" & ") if a.strip())
    return canonical(Rule(body, atom(head_text)))


def load_rules(stream: TextIO, graph: KnowledgeGraph) -> list[Rule]:
    """
    Read a rule file. Comment lines (``#``) and blank lines are skipped; measure columns, if
    present, are ignored, since they are recomputed against whichever graph the rules are used on.

    :raises MalformedLine: a line does not parse as a rule.
    """
    rules = []
    for line_number, line in enumerate(stream, start=1):
        line = line.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        try:
            rules.append(parse_rule(line.split("\t")[0], graph))
        except (ValueError, MissingLabel) as e:
            raise MalformedLine(line_number, str(e)) from e
    return rules
