"""
Grounding engine: backtracking joins of rule atoms against a ``KnowledgeGraph``, and the quality
measures defined on top of them.

Counting units:

- support counts distinct grounded heads ``σ(H)`` whose body also holds;
- both confidence denominators count distinct bindings of the head variables for which the body
  holds (the PCA one additionally requires the head subject to have some head fact).
"""
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Optional, Sequence

from kgbench.errors import ZeroBodyGroundings, ZeroHeadFacts, ZeroPcaDenominator
from kgbench.graph import KnowledgeGraph, Triple
from kgbench.rules import Atom, Measures, Rule, Term, Var, structural_checks

Binding = dict[Var, int]


@dataclass(frozen=True)
class Grounding:
    rule: Rule
    body_triples: tuple[Triple, ...]
    head_triple: Triple


def _value(term: Term, binding: Binding) -> Optional[int]:
    if isinstance(term, Var):
        return binding.get(term)
    return term


def _candidates(graph: KnowledgeGraph, atom: Atom, binding: Binding):
    """(cost, iterable of (subject, object) pairs) for ``atom`` under ``binding``."""
    s, o = _value(atom.subject, binding), _value(atom.object, binding)
    p = atom.predicate
    if s is not None and o is not None:
        return 0, (((s, o),) if graph.has(s, p, o) else ())
    if s is not None:
        objects = graph.objects(s, p)
        return len(objects), ((s, x) for x in objects)
    if o is not None:
        subjects = graph.subjects(p, o)
        return len(subjects), ((x, o) for x in subjects)
    return graph.count(p), graph.facts(p)


def _pick(graph: KnowledgeGraph, atoms: Sequence[Atom], binding: Binding):
    """The cheapest atom to join next, with its candidate pairs and the remaining atoms."""
    best = None
    for i, atom in enumerate(atoms):
        cost, pairs = _candidates(graph, atom, binding)
        if best is None or cost < best[0]:
            best = (cost, i, pairs)
            if cost == 0:
                break
    _, i, pairs = best
    return atoms[i], pairs, atoms[:i] + atoms[i + 1 :]


def _bind(atom: Atom, s: int, o: int, binding: Binding) -> Optional[list[Var]]:
    """
    Extend ``binding`` in place so ``atom`` grounds to ``(s, o)``. Returns the newly bound
    variables, or ``None`` (with ``binding`` unchanged) on a conflict.
    """
    added = []
    for term, value in ((atom.subject, s), (atom.object, o)):
        bound = binding.get(term) if isinstance(term, Var) else term
        if bound is None:
            binding[term] = value
            added.append(term)
        elif bound != value:
            for v in added:
                del binding[v]
            return None
    return added


def solutions(graph: KnowledgeGraph, atoms: Sequence[Atom], binding: Binding) -> Iterator[Binding]:
    """Every total extension of ``binding`` under which all ``atoms`` are in ``graph`` (copies)."""
    if not atoms:
        yield dict(binding)
        return
    atom, pairs, rest = _pick(graph, tuple(atoms), binding)
    for s, o in pairs:
        added = _bind(atom, s, o, binding)
        if added is None:
            continue
        yield from solutions(graph, rest, binding)
        for v in added:
            del binding[v]


def exists(graph: KnowledgeGraph, atoms: Sequence[Atom], binding: Binding) -> bool:
    if not atoms:
        return True
    atom, pairs, rest = _pick(graph, tuple(atoms), binding)
    for s, o in pairs:
        added = _bind(atom, s, o, binding)
        if added is None:
            continue
        found = exists(graph, rest, binding)
        for v in added:
            del binding[v]
        if found:
            return True
    return False


def project(
    graph: KnowledgeGraph,
    atoms: Sequence[Atom],
    binding: Binding,
    targets: Sequence[Var],
) -> set[tuple[int, ...]]:
    """
    Distinct values of ``targets`` over all solutions of ``atoms`` extending ``binding``. Once every
    target is bound the remaining atoms only need one witness, so the search stops early there.
    Every target must occur in ``atoms`` or in ``binding``.
    """
    results: set[tuple[int, ...]] = set()
    binding = dict(binding)

    def walk(remaining):
        if all(t in binding for t in targets):
            key = tuple(binding[t] for t in targets)
            if key not in results and exists(graph, remaining, binding):
                results.add(key)
            return
        if not remaining:
            raise ValueError(f"targets {targets} are not all bound by the atoms")
        atom, pairs, rest = _pick(graph, remaining, binding)
        for s, o in pairs:
            added = _bind(atom, s, o, binding)
            if added is None:
                continue
            walk(rest)
            for v in added:
                del binding[v]

    walk(tuple(atoms))
    return results


def head_facts(rule: Rule, graph: KnowledgeGraph) -> Iterator[Binding]:
    """Bindings of the head variables for every fact matching the head atom, ascending."""
    head = rule.head
    for s, o in graph.facts(head.predicate):
        binding: Binding = {}
        if _bind(head, s, o, binding) is not None:
            yield binding


def supported_heads(rule: Rule, graph: KnowledgeGraph) -> Iterator[Triple]:
    """Head triples whose body also holds, in ascending order."""
    for binding in head_facts(rule, graph):
        if exists(graph, rule.body, binding):
            yield rule.head.ground(binding)


def count_head_facts(rule: Rule, graph: KnowledgeGraph) -> int:
    head = rule.head
    distinct_variables = isinstance(head.subject, Var) and isinstance(head.object, Var)
    if distinct_variables and head.subject != head.object:
        return graph.count(head.predicate)
    return sum(1 for _ in head_facts(rule, graph))


def support(rule: Rule, graph: KnowledgeGraph) -> int:
    return sum(1 for _ in supported_heads(rule, graph))


def _require_safe(rule: Rule):
    if not structural_checks(rule).safe:
        raise ValueError(f"{rule} is not safe: its body does not bind every head variable")


def body_bindings(rule: Rule, graph: KnowledgeGraph) -> set[tuple[int, ...]]:
    """Distinct head-variable bindings under which the body holds."""
    _require_safe(rule)
    return project(graph, rule.body, {}, rule.head_variables)


def _pca_count(rule: Rule, graph: KnowledgeGraph, bindings: set[tuple[int, ...]]) -> int:
    head = rule.head
    if not isinstance(head.subject, Var):
        # the subject is a constant: the PCA condition is the same for every binding
        return len(bindings) if graph.objects(head.subject, head.predicate) else 0
    position = rule.head_variables.index(head.subject)
    return sum(1 for b in bindings if graph.objects(b[position], head.predicate))


def measure(rule: Rule, graph: KnowledgeGraph, support_count: Optional[int] = None) -> Measures:
    """
    All measures of ``rule`` at once. Confidence denominators are computed only for safe rules.

    :param support_count: Reuse an already known support instead of recounting it.
    """
    if support_count is None:
        support_count = support(rule, graph)
    n_head = count_head_facts(rule, graph)
    if not structural_checks(rule).safe:
        return Measures(support_count, n_head)
    bindings = body_bindings(rule, graph)
    return Measures(support_count, n_head, len(bindings), _pca_count(rule, graph, bindings))


def head_coverage(rule: Rule, graph: KnowledgeGraph) -> Fraction:
    n_head = count_head_facts(rule, graph)
    if n_head == 0:
        raise ZeroHeadFacts(graph.predicate_label(rule.head.predicate))
    return Fraction(support(rule, graph), n_head)


def confidence(rule: Rule, graph: KnowledgeGraph) -> Fraction:
    n_body = len(body_bindings(rule, graph))
    if n_body == 0:
        raise ZeroBodyGroundings(rule)
    return Fraction(support(rule, graph), n_body)


def pca_confidence(rule: Rule, graph: KnowledgeGraph) -> Fraction:
    bindings = body_bindings(rule, graph)
    if not bindings:
        raise ZeroBodyGroundings(rule)
    n_pca = _pca_count(rule, graph, bindings)
    if n_pca == 0:
        raise ZeroPcaDenominator(rule)
    return Fraction(support(rule, graph), n_pca)


def bodies(rule: Rule, graph: KnowledgeGraph, head_triple: Triple) -> list[tuple[Triple, ...]]:
    """Distinct body groundings (triples in body order) concluding ``head_triple``, ascending."""
    binding: Binding = {}
    s, _, o = head_triple
    if _bind(rule.head, s, o, binding) is None:
        return []
    found = {tuple(a.ground(b) for a in rule.body) for b in solutions(graph, rule.body, binding)}
    return sorted(found)


def witness(rule: Rule, graph: KnowledgeGraph, head_triple: Triple) -> Optional[Grounding]:
    """
    The grounding of ``rule`` concluding ``head_triple`` whose body triples are smallest, or
    ``None`` if the body does not hold for that head.
    """
    found = bodies(rule, graph, head_triple)
    return Grounding(rule, found[0], head_triple) if found else None


def groundings(rule: Rule, graph: KnowledgeGraph, limit: int) -> list[Grounding]:
    """
    Up to ``limit`` groundings with body and head in ``graph``: one per distinct head triple, in
    ascending head order, each with its smallest body.
    """
    _require_safe(rule)
    found = []
    if limit <= 0:
        return found
    for head_triple in supported_heads(rule, graph):
        found.append(witness(rule, graph, head_triple))
        if len(found) >= limit:
            break
    return found
