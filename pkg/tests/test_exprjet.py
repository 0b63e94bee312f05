from __future__ import annotations

import math

import numpy as np
import pytest

from projcalc.exprjet import (
    Add,
    Call,
    EvalError,
    Mul,
    Neg,
    Num,
    ParseError,
    Pow,
    ScalarField,
    Var,
    jet_space,
    parse_expression,
)

from corpus import interior_points, random_expressions
from fd import fd_partial


def test_unknown_identifier_reports_offset():
    with pytest.raises(ParseError) as err:
        parse_expression("x + b", ["x", "y"])
    assert "b" in str(err.value)
    assert err.value.offset == 4


def test_simple_ast_shape():
    tree = parse_expression("2+0.3*sin(x)", ["x"])
    assert tree == Add(Num(2.0), Mul(Num(0.3), Call("sin", Var("x"))))


def test_unary_minus_binds_looser_than_power():
    tree = parse_expression("-x^2", ["x"])
    assert tree == Neg(Pow(Var("x"), Num(2.0)))
    # reference evaluator: python's ** has the same precedence vs unary minus
    for src, py in [("-x^2", "-x**2"), ("2*-x^2", "2*-x**2"), ("x^-2", "x**-2"),
                    ("-x^2 + x", "-x**2 + x"), ("2^3^2", "2**3**2")]:
        f = ScalarField(src, ["x"])
        for x in (0.3, 1.7, -1.2):
            if "x^-2" in src and x == 0:
                continue
            assert f((x,)) == pytest.approx(eval(py), rel=1e-15)


def test_power_right_associative():
    assert parse_expression("x^y^2", ["x", "y"]) == Pow(Var("x"), Pow(Var("y"), Num(2.0)))


def test_function_arity_and_unknown_function():
    with pytest.raises(ParseError, match="one argument"):
        parse_expression("sin(x, y)", ["x", "y"])
    with pytest.raises(ParseError, match="unknown function"):
        parse_expression("foo(x)", ["x"])


def test_syntax_error_offset():
    with pytest.raises(ParseError) as err:
        parse_expression("x + * y", ["x", "y"])
    assert err.value.offset == 4


def test_constants_pi_e():
    f = ScalarField("sin(pi) + e", ["x"])
    assert f((0.0,)) == pytest.approx(math.sin(math.pi) + math.e)


def test_bilinear_jet():
    f = ScalarField("x*y", ["x", "y"])
    jet = f.eval_jet((2.0, 3.0))
    assert jet.value == 6.0
    assert jet.partial((1, 0)) == 3.0
    assert jet.partial((0, 1)) == 2.0
    assert jet.partial((1, 1)) == 1.0
    for mi in jet.space.indices:
        if sum(mi) >= 2 and mi != (1, 1):
            assert jet.partial(mi) == 0.0


def test_sine_jet_at_origin():
    f = ScalarField("sin(x)", ["x", "y"])
    jet = f.eval_jet((0.0, 0.0))
    assert jet.value == 0.0
    assert jet.partial((1, 0)) == pytest.approx(1.0)
    assert jet.partial((2, 0)) == pytest.approx(0.0, abs=1e-15)
    assert jet.partial((3, 0)) == pytest.approx(-1.0)


def test_exp_field_against_finite_differences():
    f = ScalarField("exp(x+y^2)", ["x", "y"])
    point = (0.1, 0.2)
    jet = f.eval_jet(point)
    # first and second partials at the spec's step; order three with the wider
    # stencil the roundoff floor of float64 demands, order four as sanity
    for mi in jet.space.indices:
        order = sum(mi)
        if order == 0:
            continue
        h = 1e-4 if order <= 2 else None
        rel = 1e-6 if order <= 3 else 1e-4
        ref = fd_partial(lambda p: f(p), point, mi, h=h)
        assert jet.partial(mi) == pytest.approx(ref, rel=rel)


def test_random_corpus_jets_match_finite_differences():
    exprs = random_expressions(100, seed=7)
    points = interior_points(100, seed=11)
    space = jet_space(2)
    checked = 0
    for src, point in zip(exprs, points):
        f = ScalarField(src, ["x", "y"])
        jet = f.eval_jet(point)
        for mi in space.indices:
            if not 1 <= sum(mi) <= 3:
                continue
            ref = fd_partial(lambda p: f(p), point, mi)
            scale = max(abs(ref), 1.0)
            assert abs(jet.partial(mi) - ref) <= 1e-6 * scale, (src, mi)
            checked += 1
    assert checked == 100 * 9  # orders 1..3 in two variables


def test_polynomial_jets_are_exact():
    # independent oracle: symbolic differentiation of the syntax tree
    exprs = [
        "x^4 - 2*x^2*y^2 + 0.5*y^4 + x*y - 3",
        "1 + x + x*y + x^2*y^2",
        "(x + y)^3",
    ]
    points = interior_points(5, seed=3)
    for src in exprs:
        f = ScalarField(src, ["x", "y"])
        for point in points:
            jet = f.eval_jet(point)
            for mi in jet.space.indices:
                g = f
                for axis, reps in enumerate(mi):
                    for _ in range(reps):
                        g = g.diff(f.coords[axis])
                ref = g(point)
                assert abs(jet.partial(mi) - ref) <= 1e-13 * max(1.0, abs(ref))


def test_parse_print_parse_roundtrip():
    sources = [
        "2+0.3*sin(x)",
        "-x^2",
        "x^y^2",
        "x - (y - 1)",
        "x - y - 1",
        "(x + y)*(x - y)",
        "1/(1 + x^2)",
        "2*-x",
        "-(x*y)",
        "sqrt(abs(x)) + log(2 + y^2)",
        "x/y/2",
        "x^(y + 1)",
    ] + random_expressions(40, seed=23)
    for src in sources:
        tree = parse_expression(src, ["x", "y"])
        printed = tree.to_source()
        assert parse_expression(printed, ["x", "y"]) == tree, (src, printed)


def test_domain_errors_name_subexpression():
    f = ScalarField("log(x - 1)", ["x"])
    with pytest.raises(EvalError, match=r"log"):
        f.eval_jet((0.5,))
    g = ScalarField("1/(x - 1)", ["x"])
    with pytest.raises(EvalError, match="division by zero"):
        g.eval_jet((1.0,))
    with pytest.raises(EvalError):
        ScalarField("sqrt(x)", ["x"]).eval_jet((-2.0,))


def test_abs_sign_frozen():
    f = ScalarField("abs(x)*y", ["x", "y"])
    jet = f.eval_jet((-2.0, 3.0))
    assert jet.value == 6.0
    assert jet.partial((1, 0)) == -3.0  # sign frozen at x=-2
    assert jet.partial((0, 1)) == 2.0


def test_constant_jet_has_no_higher_terms():
    jet = ScalarField("3.5", ["x", "y"]).eval_jet((0.4, 0.1))
    assert jet.value == 3.5
    assert not np.any(jet.coeffs[1:])


def test_nonconstant_exponent():
    f = ScalarField("x^y", ["x", "y"])
    point = (1.3, 0.7)
    jet = f.eval_jet(point)
    assert jet.value == pytest.approx(1.3 ** 0.7)
    for mi in [(1, 0), (0, 1), (1, 1), (2, 0)]:
        ref = fd_partial(lambda p: p[0] ** p[1], point, mi)
        assert jet.partial(mi) == pytest.approx(ref, rel=1e-7)


def test_derivative_jet_consistency():
    f = ScalarField("sin(x*y) + x^3", ["x", "y"])
    jet = f.eval_jet((0.4, 0.8), order=4)
    dx = jet.derivative(0)
    assert dx.order == 3
    assert dx.value == pytest.approx(jet.partial((1, 0)))
    assert dx.partial((1, 1)) == pytest.approx(jet.partial((2, 1)))


def test_all_function_jets_match_fd():
    cases = [
        ("tan(x)", 0.4),
        ("atan(x)", 0.7),
        ("sinh(x)", 0.3),
        ("cosh(x)", 0.3),
        ("sqrt(2 + x)", 0.5),
        ("log(2 + x)", 0.5),
        ("exp(x)", 0.2),
    ]
    for src, x in cases:
        f = ScalarField(src, ["x"])
        jet = f.eval_jet((x,))
        for k in range(1, 5):
            ref = fd_partial(lambda p: f(p), (x,), (k,))
            rel = 2e-6 if k <= 3 else 1e-4
            assert jet.partial((k,)) == pytest.approx(ref, rel=rel), (src, k)
