import math
import threading
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finslab import expr as ex
from finslab.expr import (
    EvaluationError, ParseError, Tape, differentiate, evaluate, parse_expr, simplify_basic,
    to_text,
)
from finslab.geometry import geometry

from conftest import CATALOG, arrays, cfg

EX1_F = "sqrt(x2*x3*y1^2 + y2^2 + y3^2 + y4^2)"


# ---------------------------------------------------------------- parsing

def test_parse_product_of_variable_and_power():
    e = parse_expr("x2*y1^2", 2)
    assert e.kind == ex.PROD
    a, b = e.args
    assert (a.kind, a.payload) == (ex.VAR, ("x", 2))
    assert b.kind == ex.POW and b.payload == 2
    assert (b.args[0].kind, b.args[0].payload) == (ex.VAR, ("y", 1))


def test_parse_example1_metric():
    e = parse_expr(EX1_F, 4)
    assert e.kind == ex.SQRT
    assert e.args[0].kind == ex.SUM and len(e.args[0].args) == 4


def test_parse_index_out_of_range():
    with pytest.raises(ParseError, match="out of range") as info:
        parse_expr("y5", 4)
    assert info.value.offset == 0


@pytest.mark.parametrize("text, offset", [
    ("x1 +", 3), ("x1 * * x2", 5), ("foo(x1)", 0), ("(x1", 2), ("x1 ^ y1", 5), ("", 0),
    ("z1", 0), ("x0", 0), ("x1 x2", 3),
])
def test_parse_errors_carry_offsets(text, offset):
    with pytest.raises(ParseError) as info:
        parse_expr(text, 3)
    assert info.value.offset == offset
    assert 0 <= info.value.offset < max(len(text), 1)


def test_caret_binds_tighter_than_unary_minus():
    assert evaluate(parse_expr("-x1^2", 1), [3.0], [0.0]) == -9.0


def test_left_associativity():
    assert evaluate(parse_expr("x1 - 2 - 3", 1), [10.0], [0.0]) == 5.0
    assert evaluate(parse_expr("x1 / 2 / 5", 1), [10.0], [0.0]) == 1.0
    assert evaluate(parse_expr("x1 / 2 * 5", 1), [10.0], [0.0]) == 25.0


def test_rational_exponents_and_numbers():
    e = parse_expr("x1^(1/4) + x1^(-2) + 2.5e1 + x1^(-1/2)", 1)
    v = evaluate(e, [16.0], [0.0])
    assert math.isclose(v, 2.0 + 1 / 256 + 25.0 + 0.25)
    assert parse_expr("0.1", 1).payload == ("q", Fraction(1, 10))


def test_structural_equality_is_identity():
    a = parse_expr("x1*y2 + sin(x2)", 2)
    b = parse_expr("x1 * y2+sin( x2 )", 2)
    assert a is b and a == b and hash(a) == hash(b)


# ---------------------------------------------------------------- printing

PRINT_CASES = [
    "x1", "-x1", "-x1^2", "(-x1)^2", "x1 - (x2 - y1)", "x1/(x2*y1)", "x1/x2/y1", "2*x1*y2^(1/4)",
    "sqrt(x1) + log(x2) - exp(-y1)", "(x1 + x2)^(-3/2)", "-(x1 + y2)*3", "0.125*x1", "1/3",
    "x1*-x2", "-2^2", EX1_F.replace("x3", "x2").replace("y3", "y2").replace("y4", "y1"),
]


@pytest.mark.parametrize("text", PRINT_CASES)
def test_parse_print_identity(text):
    e = parse_expr(text, 2)
    printed = to_text(e)
    assert parse_expr(printed, 2) is e
    assert to_text(parse_expr(printed, 2)) == printed


_leaf = st.one_of(
    st.sampled_from(["x1", "x2", "y1", "y2"]),
    st.fractions(min_value=-5, max_value=5, max_denominator=8).map(
        lambda q: str(float(q)) if q.denominator in (1, 2, 4, 8) else str(q.numerator)),
)


def _combine(children):
    return st.one_of(
        st.tuples(children, st.sampled_from(["+", "-", "*", "/"]), children).map(
            lambda t: f"({t[0]} {t[1]} {t[2]})"),
        st.tuples(st.sampled_from(["sqrt", "sin", "cos", "exp", "log"]), children).map(
            lambda t: f"{t[0]}({t[1]})"),
        st.tuples(children, st.sampled_from(["2", "3", "(1/4)", "(-1)", "(-3/2)"])).map(
            lambda t: f"({t[0]})^{t[1]}"),
        children.map(lambda c: f"-({c})"),
    )


expr_text = st.recursive(_leaf, _combine, max_leaves=12)


@settings(max_examples=200, deadline=None)
@given(expr_text)
def test_print_parse_print_fixed_point(text):
    e = parse_expr(text, 2)
    once = to_text(e)
    again = parse_expr(once, 2)
    assert again is e
    assert to_text(again) == once


@settings(max_examples=200, deadline=None)
@given(expr_text, st.lists(st.floats(0.2, 3.0), min_size=4, max_size=4))
def test_simplify_preserves_values(text, pt):
    e = parse_expr(text, 2)
    x, y = pt[:2], pt[2:]
    try:
        v = evaluate(e, x, y)
    except EvaluationError:
        return
    s = evaluate(simplify_basic(e), x, y)
    assert math.isclose(v, s, rel_tol=1e-9, abs_tol=1e-12)


# ---------------------------------------------------------------- differentiation

def test_power_rule():
    d = differentiate(parse_expr("x2*y1^2", 2), "y", 1)
    assert d is parse_expr("2*x2*y1", 2) or to_text(d) in ("2*x2*y1", "x2*(2*y1)")
    assert evaluate(d, [0, 3.0], [5.0, 0]) == 30.0


def test_constant_derivative_is_zero():
    assert differentiate(ex.const(7), "x", 1) is ex.ZERO


def test_example1_energy_derivative_matches_fd():
    F2 = parse_expr("x2*x3*y1^2 + y2^2 + y3^2 + y4^2", 4)
    x, y = np.array([0.0, 1.0, 2.0, 0.0]), np.array([1.0, 0, 0, 0])
    d = evaluate(differentiate(F2, "x", 3), x, y)
    h = 1e-5
    fd = (evaluate(F2, x + h * np.eye(4)[2], y) - evaluate(F2, x - h * np.eye(4)[2], y)) / (2 * h)
    assert d == pytest.approx(1.0, abs=1e-12)
    assert abs(d - fd) <= 1e-8


def test_derivatives_are_memoized():
    e = parse_expr(EX1_F, 4)
    assert differentiate(e, "y", 1) is differentiate(e, "y", 1)


def test_concurrent_differentiation_agrees():
    e = parse_expr("sqrt(x1^2*y1^4 + cos(x2)*y2^4)^(1/2)", 2)
    results = []

    def work():
        results.append(differentiate(differentiate(e, "y", 1), "x", 2))

    threads = [threading.Thread(target=work) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(r is results[0] for r in results)


@pytest.mark.parametrize("name", CATALOG)
def test_derivative_matches_central_difference(name):
    """200 samples per catalog metric: every first partial of F^2 and G^i."""
    spec = cfg(name).spec
    geo = geometry(spec)
    X, Y = arrays(name, 200, stream=5)
    n = spec.dim
    exprs = [geo.energy] + list(geo.G)
    h = 1e-6
    base = Tape(exprs).fast(X, Y)
    for axis in ("x", "y"):
        for i in range(n):
            d = Tape([differentiate(e, axis, i + 1) for e in exprs]).fast(X, Y)
            E = np.zeros((1, n))
            E[0, i] = h
            Xp, Xm = (X + E, X - E) if axis == "x" else (X, X)
            Yp, Ym = (Y + E, Y - E) if axis == "y" else (Y, Y)
            fd = (Tape(exprs).fast(Xp, Yp) - Tape(exprs).fast(Xm, Ym)) / (2 * h)
            scale = 1 + np.abs(d) + np.abs(base)
            assert np.max(np.abs(d - fd) / scale) <= 1e-6, (axis, i)


# ---------------------------------------------------------------- simplification

def test_simplify_examples():
    assert simplify_basic(ex.raw_prod(ex.ZERO, ex.sqrt(ex.var("x", 1)))) is ex.ZERO
    six_y = simplify_basic(ex.raw_prod(ex.raw_prod(ex.const(2), ex.const(3)), ex.var("y", 1)))
    assert to_text(six_y) == "6*y1"
    d = differentiate(parse_expr("x1*y1", 2), "x", 2)
    assert simplify_basic(d) is ex.ZERO


def test_simplify_identities():
    x = ex.var("x", 1)
    assert simplify_basic(ex.raw_prod(ex.ONE, x)) is x
    assert simplify_basic(ex.raw_sum(x, ex.ZERO)) is x
    assert simplify_basic(ex.raw_pow(x, 1)) is x
    assert simplify_basic(ex.raw_pow(x, 0)) is ex.ONE
    assert simplify_basic(ex.raw_neg(ex.raw_neg(x))) is x


# ---------------------------------------------------------------- evaluation

def test_evaluate_example1_norm():
    F = parse_expr(EX1_F, 4)
    assert evaluate(F, [0.3, 1, 2, -0.7], [1, 0, 0, 0]) == pytest.approx(math.sqrt(2), abs=1e-15)


def test_evaluate_constant():
    assert evaluate(ex.const(3), [0.1, 0.2], [0.3, 0.4]) == 3.0


def test_division_by_zero_reports_subtree():
    e = parse_expr("y1 + 1/x1", 1)
    with pytest.raises(EvaluationError, match="division by zero") as info:
        evaluate(e, [0.0], [1.0])
    assert info.value.subtree is parse_expr("1/x1", 1)


@pytest.mark.parametrize("text, x, msg", [
    ("sqrt(x1)", -1.0, "sqrt"), ("log(x1)", 0.0, "log"), ("x1^(1/4)", -2.0, "power"),
    ("exp(x1)", 1e3, "non-finite"),
])
def test_singular_evaluations_raise(text, x, msg):
    with pytest.raises(EvaluationError, match=msg):
        evaluate(parse_expr(text, 1), [x], [0.0])


def test_fast_and_checked_paths_agree():
    name = "ex5"
    spec = cfg(name).spec
    X, Y = arrays(name, 20)
    t = geometry(spec).tape("N")
    assert np.allclose(t(X, Y), t.fast(X, Y), rtol=0, atol=0)
