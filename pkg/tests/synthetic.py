"""
Small graphs for tests.

The family graph is a set of clans: a grandfather, his sons (all brothers of each other) and their
children, who have every brother of their father as an uncle. Clan "1" is fixed: its sons are 139,
205, 138, 2973 and 2974, and 139 has the single child 14.
"""
import io
from itertools import count
from typing import Iterable

import numpy as np

from kgbench.graph import KnowledgeGraph, load_graph

LabelTriple = tuple[str, str, str]

PLANTED_SONS = ("139", "205", "138", "2973", "2974")
PLANTED_RULE = "fatherOf(?a,?c) & uncleOf(?b,?c) => brotherOf(?a,?b)"


def make_graph(triples: Iterable[LabelTriple]) -> KnowledgeGraph:
    return load_graph(io.StringIO(tsv(triples)))


def tsv(triples: Iterable[LabelTriple]) -> str:
    return "".join("\t".join(t) + "\n" for t in triples)


def _clan(grandfather: str, children_of: dict[str, list[str]]) -> list[LabelTriple]:
    sons = list(children_of)
    triples = [(grandfather, "fatherOf", son) for son in sons]
    for father, children in children_of.items():
        for child in children:
            triples.append((father, "fatherOf", child))
            triples.extend((uncle, "uncleOf", child) for uncle in sons if uncle != father)
    triples.extend((a, "brotherOf", b) for a in sons for b in sons if a != b)
    return triples


def family_triples(clans: int = 12, seed: int = 0) -> list[LabelTriple]:
    rng = np.random.default_rng(seed)
    fresh = (str(i) for i in count(3000))
    planted = {son: [next(fresh) for _ in range(2)] for son in PLANTED_SONS}
    planted["139"] = ["14"]
    triples = _clan("1", planted)
    for _ in range(clans - 1):
        grandfather = next(fresh)
        sons = [next(fresh) for _ in range(int(rng.integers(2, 6)))]
        children_of = {son: [next(fresh) for _ in range(int(rng.integers(1, 3)))] for son in sons}
        triples.extend(_clan(grandfather, children_of))
    return triples


def family_graph(clans: int = 12, seed: int = 0) -> KnowledgeGraph:
    return make_graph(family_triples(clans, seed))


def random_graph(seed: int, max_triples: int = 200) -> KnowledgeGraph:
    """
    Random graph over at most 8 predicates and 15 entities. A few predicates get an inverted or
    copied partner so that some rules exist at all.
    """
    rng = np.random.default_rng(seed)
    n_predicates = int(rng.integers(3, 9))
    n_entities = 15
    triples = set()
    for _ in range(int(rng.integers(20, max_triples // 2))):
        s, o = rng.choice(n_entities, size=2, replace=False)
        triples.add((f"e{s}", f"p{rng.integers(n_predicates)}", f"e{o}"))
    for s, p, o in sorted(triples):
        if len(triples) >= max_triples:
            break
        if p == "p0" and rng.random() < 0.7:
            triples.add((o, "p1", s))
        elif p == "p2" and rng.random() < 0.6:
            triples.add((s, f"p{n_predicates - 1}", o))
    return make_graph(sorted(triples)[:max_triples])
