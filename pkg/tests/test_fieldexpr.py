import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mpray.fieldexpr import (BinOp, Call, CompiledFields, ExprSyntaxError, FieldDomainError, Neg, Num, Var,
                             diff, eval_jet2, evaluate, parse, to_source)
from mpray.fieldexpr import symbolic as sym

CORPUS = json.loads((Path(__file__).parent / "golden" / "expressions.json").read_text())


def test_corpus_size():
    assert len(CORPUS) == 50


@pytest.mark.parametrize("case", CORPUS, ids=[c["source"] for c in CORPUS])
def test_corpus_round_trip(case):
    e = parse(case["source"])
    assert to_source(e) == case["canonical"]
    assert parse(case["canonical"]) == e
    assert evaluate(e, case["point"]) == pytest.approx(case["value"], rel=1e-13, abs=1e-15)


def _central(e, x, h):
    x = np.asarray(x, float)
    n = len(x)
    f = lambda y: evaluate(e, y)
    grad = np.zeros(n)
    hess = np.zeros((n, n))
    for i in range(n):
        ei = np.eye(n)[i] * h
        grad[i] = (f(x + ei) - f(x - ei)) / (2 * h)
        for j in range(n):
            ej = np.eye(n)[j] * h
            hess[i, j] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h * h)
    return grad, hess


def _fd_jet(e, x, h=2e-3):
    """Richardson-extrapolated central differences (fourth order)."""
    g1, h1 = _central(e, x, h)
    g2, h2 = _central(e, x, h / 2)
    return (4 * g2 - g1) / 3, (4 * h2 - h1) / 3


@pytest.mark.parametrize("case", CORPUS, ids=[c["source"] for c in CORPUS])
def test_corpus_jets_match_finite_differences(case):
    e = parse(case["source"])
    x = case["point"]
    jet = eval_jet2(e, x)
    grad, hess = _fd_jet(e, x)
    assert np.all(np.abs(jet.grad - grad) <= 1e-6 * (1 + np.abs(grad)))
    assert np.all(np.abs(jet.hess - hess) <= 1e-6 * (1 + np.abs(hess)))


def test_compiled_matches_tree_walk():
    exprs = [parse(c["source"]) for c in CORPUS]
    cf = CompiledFields(exprs, 3)
    x = np.array(CORPUS[0]["point"])
    v, g, h = cf.jets(x)
    for k, e in enumerate(exprs):
        jet = eval_jet2(e, x)
        assert v[k] == pytest.approx(jet.value, rel=1e-14, abs=1e-14)
        np.testing.assert_allclose(g[k], jet.grad, rtol=1e-12, atol=1e-13)
        np.testing.assert_allclose(h[k], jet.hess, rtol=1e-12, atol=1e-12)


def test_batch_matches_single_point(rng):
    cf = CompiledFields([parse("exp(x1)*sin(x2)"), parse("x1^2/(1+x2^2)")], 2)
    X = rng.uniform(-1, 1, (7, 2))
    v, g, h = cf.jets_batch(X)
    for k, x in enumerate(X):
        v1, g1, h1 = cf.jets(x)
        np.testing.assert_array_equal(v[k], v1)
        np.testing.assert_array_equal(g[k], g1)
        np.testing.assert_array_equal(h[k], h1)


def test_examples():
    assert evaluate(parse("0.1*(x1^2+x2^2)"), [1, 0]) == pytest.approx(0.1)
    assert evaluate(parse("sin(x1)*exp(x2)"), [0, 0]) == 0.0
    assert evaluate(parse("2^3^2"), [0]) == 512
    jet = eval_jet2(parse("x1*x2"), [2, 3])
    assert jet.value == 6
    np.testing.assert_array_equal(jet.grad, [3, 2])
    np.testing.assert_array_equal(jet.hess, [[0, 1], [1, 0]])
    jet = eval_jet2(parse("exp(x1)", 1), [0.0])
    assert (jet.value, jet.grad[0], jet.hess[0, 0]) == (1.0, 1.0, 1.0)


@pytest.mark.parametrize("src,offset", [
    ("1+*x1", 2), ("x1+", 3), ("sin(x1", 6), ("foo(x1)", 0), ("x1 $ 2", 3), ("(x1))", 4),
    ("x4", 0), ("", 0), ("sin(x1, x2)", 0), ("x1+é", 3),
])
def test_syntax_errors_report_byte_offset(src, offset):
    with pytest.raises(ExprSyntaxError) as info:
        parse(src)
    assert info.value.offset == offset


def test_domain_error_reports_offset():
    with pytest.raises(FieldDomainError) as info:
        eval_jet2(parse("1+log(x1-2)"), [0.0, 0.0])
    assert info.value.offset == 2
    cf = CompiledFields([parse("sqrt(x1)")], 2)
    with pytest.raises(FieldDomainError):
        cf.jets(np.array([-1.0, 0.0]))


def test_symbolic_derivative_agrees_with_jets(rng):
    for case in CORPUS[:30]:
        e = parse(case["source"])
        x = case["point"]
        jet = eval_jet2(e, x)
        for i in range(3):
            assert evaluate(diff(e, i), x) == pytest.approx(jet.grad[i], rel=1e-11, abs=1e-11)


def test_symbolic_simplification():
    x1 = Var(0)
    assert sym.is_zero(sym.sub(x1, x1)) or evaluate(sym.sub(x1, x1), [0.7]) == 0
    assert sym.is_zero(sym.mul(0.0, parse("exp(x1)")))
    assert to_source(sym.add(x1, 0.0)) == "x1"


# --- property: printed source re-parses to the same tree ---------------------------------------

_leaf = st.one_of(
    st.builds(Var, st.integers(0, 2)),
    st.builds(Num, st.floats(0, 100, allow_nan=False).map(lambda v: round(v, 3))),
)


def _extend(children):
    return st.one_of(
        st.builds(Neg, children),
        st.builds(BinOp, st.sampled_from(["+", "-", "*", "/", "^"]), children, children),
        st.builds(Call, st.sampled_from(["sin", "cos", "exp", "tanh"]), children),
    )


trees = st.recursive(_leaf, _extend, max_leaves=12)


@settings(max_examples=300, deadline=None)
@given(trees)
def test_printed_source_reparses_to_same_tree(tree):
    assert parse(to_source(tree)) == tree


@settings(max_examples=100, deadline=None)
@given(trees, st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_compiled_value_matches_tree_walk(tree, x):
    try:
        ref = evaluate(tree, x)
    except (FieldDomainError, ZeroDivisionError, OverflowError, ValueError):
        return
    if not math.isfinite(ref) or abs(ref) > 1e12:
        return
    v, _, _ = CompiledFields([tree], 3).jets(np.array(x), 0)
    assert v[0] == pytest.approx(ref, rel=1e-12, abs=1e-12)
