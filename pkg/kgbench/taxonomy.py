"""
Rule taxonomy. Types are decided by the shape of the variable arguments, with the head read as
``h(X, Y)``; predicates matter only to tell symmetry from inversion and to set recursive rules
aside.
"""
import enum
from collections import Counter
from itertools import permutations
from typing import Iterable, Mapping, Optional

from rich.table import Table

from kgbench.representation import render_text
from kgbench.rules import Atom, Rule, Var


class RuleType(str, enum.Enum):
    SYMMETRY = "Symmetry"
    INVERSION = "Inversion"
    HIERARCHY = "Hierarchy"
    COMPOSITION = "Composition"
    LONG_CHAIN = "LongChain"
    TRIANGLE = "Triangle"
    INTERSECTION = "Intersection"
    OTHER = "Other"


# Reporting rows of the rule statistics table
REPORT_BUCKETS: dict[RuleType, RuleType] = {
    RuleType.SYMMETRY: RuleType.SYMMETRY,
    RuleType.INVERSION: RuleType.INVERSION,
    RuleType.HIERARCHY: RuleType.HIERARCHY,
    RuleType.COMPOSITION: RuleType.COMPOSITION,
    RuleType.LONG_CHAIN: RuleType.OTHER,
    RuleType.TRIANGLE: RuleType.OTHER,
    RuleType.INTERSECTION: RuleType.OTHER,
    RuleType.OTHER: RuleType.OTHER,
}

BUCKET_ORDER = (
    RuleType.SYMMETRY,
    RuleType.INVERSION,
    RuleType.HIERARCHY,
    RuleType.COMPOSITION,
    RuleType.OTHER,
)


def _is_chain(body: Iterable[Atom], start: Var, end: Var) -> bool:
    """Whether some ordering of ``body`` is a forward path ``start -> ... -> end``."""
    for order in permutations(body):
        at = start
        for atom in order:
            if atom.subject != at:
                break
            at = atom.object
        else:
            if at == end:
                return True
    return False


def classify(rule: Rule) -> RuleType:
    """
    First matching shape, in this order:

    ======================  =============================================
    Symmetry                ``h(Y, X) => h(X, Y)``
    Inversion               ``p(Y, X) => h(X, Y)``
    Hierarchy               ``p(X, Y) => h(X, Y)``
    Composition             ``p(X, Z) & q(Z, Y) => h(X, Y)``
    LongChain               ``p(X, Z) & q(Z, W) & s(W, Y) => h(X, Y)``
    Triangle                any other two-atom rule with one extra variable
    Intersection            two or more atoms over ``X`` and ``Y`` only
    Other                   everything else, including rules with constants and recursive
                            rules (the head predicate recurs in a longer body)
    ======================  =============================================

    The result does not depend on variable names or body order.
    """
    head, body = rule.head, rule.body
    x, y = head.subject, head.object
    terms = [t for a in rule.atoms for t in a.terms]
    if not all(isinstance(t, Var) for t in terms) or x == y:
        return RuleType.OTHER

    fresh = rule.fresh_variables
    if len(body) == 1 and not fresh:
        (atom,) = body
        if (atom.subject, atom.object) == (y, x):
            return RuleType.SYMMETRY if atom.predicate == head.predicate else RuleType.INVERSION
        if (atom.subject, atom.object) == (x, y):
            return RuleType.HIERARCHY
    if any(a.predicate == head.predicate for a in body):
        return RuleType.OTHER
    if len(body) == 2 and len(fresh) == 1:
        return RuleType.COMPOSITION if _is_chain(body, x, y) else RuleType.TRIANGLE
    if len(body) == 3 and len(fresh) == 2 and _is_chain(body, x, y):
        return RuleType.LONG_CHAIN
    if len(body) >= 2 and not fresh:
        return RuleType.INTERSECTION
    return RuleType.OTHER


def type_histogram(rules: Iterable[Rule], bucketed: bool = True) -> dict[RuleType, int]:
    """
    Rule counts per type, every type present (zeros included). With ``bucketed`` the fine types are
    folded into the five reporting rows.
    """
    counts = Counter(classify(r) for r in rules)
    if not bucketed:
        return {t: counts[t] for t in RuleType}
    histogram = {t: 0 for t in BUCKET_ORDER}
    for t, n in counts.items():
        histogram[REPORT_BUCKETS[t]] += n
    return histogram


def histogram_table(histogram: Mapping[RuleType, int], title: Optional[str] = None) -> Table:
    table = Table(title=title)
    table.add_column("Rule type")
    table.add_column("Count", justify="right")
    for rule_type, n in histogram.items():
        table.add_row(rule_type.value, str(n))
    table.add_section()
    table.add_row("Total", str(sum(histogram.values())))
    return table


def render_histogram(histogram: Mapping[RuleType, int], header: str = "") -> str:
    """Two-column text export of a histogram, preceded by ``header``."""
    return header + render_text(histogram_table(histogram))
