import pytest

from kgbench.rules import Atom, Rule, Var
from kgbench.taxonomy import (
    BUCKET_ORDER,
    RuleType,
    classify,
    histogram_table,
    render_histogram,
    type_histogram,
)

X, Y, Z, W = Var(0), Var(1), Var(2), Var(3)
H = 0


@pytest.mark.kwparametrize(
    dict(body=(Atom(H, Y, X),), expected=RuleType.SYMMETRY),
    dict(body=(Atom(1, Y, X),), expected=RuleType.INVERSION),
    dict(body=(Atom(1, X, Y),), expected=RuleType.HIERARCHY),
    dict(body=(Atom(1, X, Z), Atom(2, Z, Y)), expected=RuleType.COMPOSITION),
    dict(body=(Atom(2, Z, Y), Atom(1, X, Z)), expected=RuleType.COMPOSITION),
    dict(body=(Atom(1, X, Z), Atom(2, Z, W), Atom(3, W, Y)), expected=RuleType.LONG_CHAIN),
    dict(body=(Atom(3, W, Y), Atom(1, X, Z), Atom(2, Z, W)), expected=RuleType.LONG_CHAIN),
    dict(body=(Atom(1, X, Z), Atom(2, Y, Z)), expected=RuleType.TRIANGLE),
    dict(body=(Atom(1, Z, X), Atom(2, Z, Y)), expected=RuleType.TRIANGLE),
    dict(body=(Atom(1, Z, X), Atom(2, Y, Z)), expected=RuleType.TRIANGLE),
    dict(body=(Atom(1, X, Y), Atom(2, Y, X)), expected=RuleType.INTERSECTION),
    dict(body=(Atom(1, X, Y), Atom(2, X, Y), Atom(3, Y, X)), expected=RuleType.INTERSECTION),
    dict(body=(Atom(1, X, 17),), expected=RuleType.OTHER),
    dict(body=(Atom(1, X, Z), Atom(2, Z, W), Atom(3, Y, W)), expected=RuleType.OTHER),
    dict(body=(Atom(H, X, Z), Atom(H, Z, Y)), expected=RuleType.OTHER),
    dict(body=(Atom(H, X, Y), Atom(1, Y, X)), expected=RuleType.OTHER),
)
def test_classify(body, expected):
    assert classify(Rule(body, Atom(H, X, Y))) is expected


def test_classify_ignores_variable_names():
    a, b, c = Var(5), Var(9), Var(2)
    assert classify(Rule((Atom(1, a, c), Atom(2, c, b)), Atom(H, a, b))) is RuleType.COMPOSITION
    assert classify(Rule((Atom(H, b, a),), Atom(H, a, b))) is RuleType.SYMMETRY


def test_reflexive_head_is_other():
    assert classify(Rule((Atom(1, X, X),), Atom(H, X, X))) is RuleType.OTHER


def test_histogram():
    rules = [
        Rule((Atom(H, Y, X),), Atom(H, X, Y)),
        Rule((Atom(1, X, Z), Atom(2, Z, Y)), Atom(H, X, Y)),
        Rule((Atom(1, X, Z), Atom(2, Y, Z)), Atom(H, X, Y)),
        Rule((Atom(1, X, Y), Atom(2, Y, X)), Atom(H, X, Y)),
    ]
    assert type_histogram(rules) == {
        RuleType.SYMMETRY: 1,
        RuleType.INVERSION: 0,
        RuleType.HIERARCHY: 0,
        RuleType.COMPOSITION: 1,
        RuleType.OTHER: 2,
    }
    assert list(type_histogram([])) == list(BUCKET_ORDER)
    fine = type_histogram(rules, bucketed=False)
    assert set(fine) == set(RuleType)
    assert fine[RuleType.TRIANGLE] == fine[RuleType.INTERSECTION] == 1


def test_render_histogram():
    histogram = type_histogram([Rule((Atom(1, Y, X),), Atom(H, X, Y))])
    text = render_histogram(histogram, header="# family\n")
    assert text.startswith("# family\n")
    assert "Inversion" in text
    assert "Total" in text
    assert "\x1b[" not in text
    assert histogram_table(histogram).row_count == len(BUCKET_ORDER) + 1
