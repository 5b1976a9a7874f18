"""
Breadth-first Horn rule mining.

The queue starts with one empty-body rule ``=> r(?0, ?1)`` per predicate. Each dequeued rule is
accepted when it is closed, connected and safe, meets every threshold, and its PCA confidence is
strictly higher than that of every already accepted rule with the same head and a subset of its
body. Rules shorter than the maximum length are refined by adding one atom; a refinement is kept
when its head coverage meets the threshold and it has not been seen before (modulo renaming).

Since every rule of length ``k`` is dequeued before any rule of length ``k + 1``, the queue is
processed one length level at a time; measures within a level are computed concurrently and the
accept/enqueue decisions are taken serially afterwards, so the result is the same for any number
of workers.
"""
import logging
import math
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from typing import Callable, Iterable, Optional

from pydantic import BaseModel, ConfigDict, Field

from kgbench.graph import KnowledgeGraph
from kgbench.grounding import head_facts, measure, project
from kgbench.rules import Atom, Measures, Rule, Var, X, Y, is_sub_body, structural_checks
from kgbench.timer import Timer

logger = logging.getLogger(__name__)


class MinerConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    min_confidence: float = Field(default=0.3, ge=0, le=1)
    min_head_coverage: float = Field(default=0.1, ge=0, le=1)
    min_pca_confidence: float = Field(default=0.4, ge=0, le=1)
    max_length: int = Field(default=3, ge=2)
    allow_instantiated_atoms: bool = False
    workers: int = Field(default=1, ge=1)

    def threshold(self, name: str) -> Fraction:
        """A threshold as the exact decimal it was written as (0.3 is 3/10)."""
        return Fraction(str(getattr(self, name)))

    def min_support(self, head_facts: int) -> int:
        """Smallest support with enough head coverage; never below 1."""
        return max(1, math.ceil(self.threshold("min_head_coverage") * head_facts))


def _open_variables(atoms: Iterable[Atom]) -> int:
    occurrences = Counter(v for a in atoms for v in a.variables)
    return sum(1 for n in occurrences.values() if n == 1)


def refine(
    rule: Rule,
    graph: KnowledgeGraph,
    config: MinerConfig,
    min_support: int = 1,
) -> list[Rule]:
    """
    Every rule one atom longer than ``rule`` obtained with

    - a dangling atom ``p(V, ?new)`` or ``p(?new, V)`` on an existing variable ``V``;
    - a closing atom ``p(V, W)`` between two distinct existing variables;
    - an instantiated atom ``p(V, c)`` or ``p(c, V)`` when ``config.allow_instantiated_atoms``;

    with at least ``min_support`` support. Candidates that could no longer be closed within
    ``config.max_length`` are left out, as are reflexive atoms, repeated atoms and atoms equal to
    the head. The support of each candidate is counted directly from the supported head groundings
    of ``rule``, and is attached to the returned (canonical) rules; confidences are not.
    """
    if len(rule) >= config.max_length:
        return []
    variables = rule.variables
    fresh = Var(1 + max(v.index for v in variables))
    slack = 2 * (config.max_length - len(rule) - 1)
    existing = set(rule.atoms)

    counts: Counter[Atom] = Counter()
    n_head = 0
    for binding in head_facts(rule, graph):
        n_head += 1
        extensions: set[Atom] = set()
        for values in project(graph, rule.body, binding, variables):
            assignment = dict(zip(variables, values))
            for v, value in assignment.items():
                extensions.update(Atom(p, v, fresh) for p in graph.out_predicates(value))
                extensions.update(Atom(p, fresh, v) for p in graph.in_predicates(value))
                if config.allow_instantiated_atoms:
                    extensions.update(Atom(t.predicate, v, t.object) for t in graph.match(value))
                    extensions.update(
                        Atom(t.predicate, t.subject, v) for t in graph.match(object=value)
                    )
                for w, other in assignment.items():
                    if w != v:
                        extensions.update(
                            Atom(p, v, w) for p in graph.predicates_between(value, other)
                        )
        counts.update(extensions)

    candidates: dict[Rule, Rule] = {}
    for atom, n in counts.items():
        if n < min_support or atom in existing:
            continue
        if _open_variables(rule.atoms + (atom,)) > slack:
            continue
        child = rule.extend(atom).with_measures(Measures(n, n_head))
        candidates.setdefault(child, child)
    return sorted(candidates.values(), key=lambda r: r.sort_key)


def accepts(rule: Rule, config: MinerConfig, accepted: Iterable[Rule]) -> bool:
    """
    Acceptance test for a rule with complete measures, against the rules accepted so far with the
    same head.
    """
    m = rule.measures
    if not rule.body or m is None or m.support == 0:
        return False
    if not structural_checks(rule):
        return False
    hc, conf, pca = m.head_coverage, m.confidence, m.pca_confidence
    if hc is None or conf is None or pca is None:
        return False
    if hc < config.threshold("min_head_coverage"):
        return False
    if conf < config.threshold("min_confidence"):
        return False
    if pca < config.threshold("min_pca_confidence"):
        return False
    for other in accepted:
        if is_sub_body(other, rule) and not pca > other.measures.pca_confidence:
            return False
    return True


def _complete(rule: Rule, graph: KnowledgeGraph) -> Rule:
    """Fill in confidences for closed rules; open rules keep support and head facts only."""
    if not structural_checks(rule).closed:
        return rule
    support = rule.measures.support if rule.measures is not None else None
    return rule.with_measures(measure(rule, graph, support_count=support))


def mine(
    graph: KnowledgeGraph,
    config: MinerConfig,
    progress: Optional[Callable[[int, int, int], None]] = None,
) -> list[Rule]:
    """
    Mine rules from ``graph`` under ``config``.

    :param progress: Called after each level with (rule length, queue size, accepted so far).
    :return: Accepted rules with measures, ordered by head predicate id and then body.
    """
    level = []
    for p in graph.used_predicates():
        n = graph.count(p)
        level.append(Rule((), Atom(p, X, Y), Measures(n, n)))
    seen = set(level)
    accepted: list[Rule] = []
    accepted_by_head: dict[int, list[Rule]] = defaultdict(list)

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        mapper = pool.map if config.workers > 1 else map
        length = 1
        while level:
            with Timer(f"mine level {length}"):
                level = list(mapper(lambda r: _complete(r, graph), level))
                refinable = []
                for rule in level:
                    is_accepted = accepts(rule, config, accepted_by_head[rule.head.predicate])
                    if is_accepted:
                        accepted.append(rule)
                        accepted_by_head[rule.head.predicate].append(rule)
                    # nothing extending an accepted perfect rule can beat it
                    perfect = is_accepted and rule.measures.pca_confidence == 1
                    if len(rule) < config.max_length and not perfect:
                        refinable.append(rule)

                children_per_rule = mapper(
                    lambda r: refine(r, graph, config, config.min_support(r.measures.head_facts)),
                    refinable,
                )
                next_level = []
                for children in children_per_rule:
                    for child in children:
                        if child not in seen:
                            seen.add(child)
                            next_level.append(child)
            logger.info(
                "length %d: %d rules evaluated, %d queued, %d accepted so far",
                length,
                len(level),
                len(next_level),
                len(accepted),
            )
            if progress is not None:
                progress(length, len(next_level), len(accepted))
            level = next_level
            length += 1

    return sorted(accepted, key=lambda r: r.sort_key)
