import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import central_difference
from signstab.expr import (
    Const,
    EvaluationError,
    ParseError,
    T,
    Var,
    VariableRangeError,
    add,
    differentiate,
    evaluate,
    is_identically_zero,
    mul,
    neg,
    parse_expression,
    pow_,
    simplify,
    sub,
    to_text,
    total_time_derivative,
)
from signstab.model import DynamicsSpec, Region
from signstab.sim import integrate


def approx_equal_fn(e1, e2, n=3, points=20, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(points):
        x = rng.uniform(-2, 2, n)
        t = float(rng.uniform(0, 5))
        assert evaluate(e1, x, t) == pytest.approx(evaluate(e2, x, t), rel=1e-12, abs=1e-12)


class TestParse:
    def test_example_tree(self):
        e = parse_expression("-x1 - x1*x2", 3)
        assert e == add(neg(Var(1)), neg(mul(Var(1), Var(2))))

    def test_constant(self):
        assert parse_expression("0") == Const(0.0)

    def test_time_varying_asymmetry(self):
        e = parse_expression("1 + 0.9*sin(t)")
        assert evaluate(e, (), math.pi / 2) == pytest.approx(1.9)
        assert e == add(Const(1.0), mul(Const(0.9), parse_expression("sin(t)")))

    @pytest.mark.parametrize("text,value", [
        ("2^3^2", 64.0),          # left-associative power
        ("-2^2", -4.0),           # power binds tighter than unary minus
        ("2*3+4", 10.0),
        ("2*(3+4)", 14.0),
        ("8/2/2", 2.0),
        ("1 - 2 - 3", -4.0),
        ("2**-1", 0.5),
        ("sqrt(16) + ln(1) + exp(0)", 5.0),
        ("log(1)", 0.0),
        ("pi", math.pi),
        ("1e-3 * 1000", 1.0),
    ])
    def test_precedence_and_literals(self, text, value):
        assert evaluate(parse_expression(text)) == pytest.approx(value)

    @pytest.mark.parametrize("text,offset", [
        ("x1 +", 4),
        ("x1 $ x2", 3),
        ("(x1", 3),
        ("foo(x1)", 0),
        ("x1 ^ x2", 5),
        ("", 0),
    ])
    def test_syntax_errors_carry_offset(self, text, offset):
        with pytest.raises(ParseError) as info:
            parse_expression(text, 3)
        assert info.value.offset == offset

    def test_offset_is_in_bytes(self):
        with pytest.raises(ParseError) as info:
            parse_expression("1 + é", 1)
        assert info.value.offset == 4
        with pytest.raises(ParseError) as info:
            parse_expression("é $", 1)
        assert info.value.offset == 0

    def test_variable_out_of_range(self):
        with pytest.raises(VariableRangeError):
            parse_expression("x4 + x1", 3)
        with pytest.raises(VariableRangeError):
            parse_expression("x0", 3)

    @pytest.mark.parametrize("text", [
        "-x1 - x1*x2", "x1^2 - x2 - x2*x3", "-(1 + 0.9*sin(t))*x1 - 0.05*x2",
        "exp(-x1) / (1 + x2^2)", "sqrt(x1*x1 + 1) - ln(2 + cos(x3))", "2^-1*x1",
    ])
    def test_text_round_trip(self, text):
        e = parse_expression(text, 3)
        assert parse_expression(to_text(e), 3) == e


class TestEvaluate:
    def test_examples(self):
        assert evaluate(parse_expression("-x1 - x1*x2", 3), (1, 2, 0), 0) == -3
        assert evaluate(parse_expression("x2^2 - x3", 3), (0, 3, 4), 0) == 5
        assert evaluate(parse_expression("1 + 0.9*sin(t)"), (), math.pi / 2) == pytest.approx(1.9)

    @pytest.mark.parametrize("text,x,sub_text", [
        ("1/(x1 - 1)", (1.0,), "1 / (x1 - 1)"),
        ("2 + ln(x1)", (-1.0,), "ln(x1)"),
        ("sqrt(x1) * 3", (-4.0,), "sqrt(x1)"),
        ("x1^-1", (0.0,), "x1^(-1)"),
    ])
    def test_domain_errors_carry_subtree_and_point(self, text, x, sub_text):
        with pytest.raises(EvaluationError) as info:
            evaluate(parse_expression(text, 1), x, 0.5)
        err = info.value
        assert to_text(err.subtree) == sub_text
        assert err.x == x and err.t == 0.5

    def test_overflow_is_an_error_not_inf(self):
        with pytest.raises(EvaluationError):
            evaluate(parse_expression("exp(x1)", 1), (1000.0,))

    def test_dimension_checked(self):
        with pytest.raises(IndexError):
            evaluate(parse_expression("x1 + x2", 2), (1.0,))


class TestDifferentiate:
    def test_triad_entries(self):
        f1 = parse_expression("-x1 - x1*x2", 3)
        f2 = parse_expression("x1^2 - x2 - x2*x3", 3)
        approx_equal_fn(differentiate(f1, 2), neg(Var(1)))
        approx_equal_fn(differentiate(f2, 1), mul(Const(2), Var(1)))
        assert differentiate(f1, 2) == neg(Var(1))

    def test_no_time_dependence(self):
        assert differentiate(parse_expression("x1 + 5", 1), "t") == Const(0.0)

    @pytest.mark.parametrize("text,var,expected", [
        ("sin(x1)", 1, "cos(x1)"),
        ("cos(2*x1)", 1, "-2*sin(2*x1)"),
        ("exp(x1*x2)", 2, "x1*exp(x1*x2)"),
        ("ln(x1)", 1, "1/x1"),
        ("sqrt(x1)", 1, "0.5/sqrt(x1)"),
        ("x1^3", 1, "3*x1^2"),
        ("x1/x2", 2, "-x1/x2^2"),
        ("t*sin(t)", "t", "sin(t) + t*cos(t)"),
    ])
    def test_rules(self, text, var, expected):
        got = differentiate(parse_expression(text, 2), var)
        want = parse_expression(expected, 2)
        rng = np.random.default_rng(1)
        for _ in range(10):
            x = rng.uniform(0.5, 2, 2)
            t = float(rng.uniform(0, 3))
            assert evaluate(got, x, t) == pytest.approx(evaluate(want, x, t), rel=1e-12)

    def test_subtraction_node(self):
        e = sub(Var(1), mul(Var(1), Var(2)))
        approx_equal_fn(differentiate(e, 1), sub(Const(1), Var(2)))


class TestTotalTimeDerivative:
    def test_constant(self):
        dyn = DynamicsSpec.from_strings(["-x1"])
        assert total_time_derivative(Const(2.0), dyn) == Const(0.0)

    def test_asymmetry_of_fast_example(self):
        dyn = DynamicsSpec.from_strings(["-x1 + x2", "-x1 - x2"])
        got = total_time_derivative(parse_expression("1 + 0.9*sin(t)"), dyn)
        approx_equal_fn(got, parse_expression("0.9*cos(t)"), n=2)

    def test_state_dependence(self):
        dyn = DynamicsSpec.from_strings(["-x1"])
        got = total_time_derivative(Var(1), dyn)
        approx_equal_fn(got, neg(Var(1)), n=1)

    @pytest.mark.parametrize("expr_text", ["x1*x2 + sin(t)", "exp(-x1^2)*cos(t)", "x1^2 + x2^2"])
    def test_matches_slope_along_trajectory(self, expr_text):
        dyn = DynamicsSpec.from_strings(["-x1 + 0.5*x2*sin(t)", "-x2 - 0.3*x1"])
        e = parse_expression(expr_text, 2)
        de = total_time_derivative(e, dyn)
        dt = 1e-3
        traj = integrate(dyn, [0.7, -0.4], 0.0, 2.0, dt)
        k = 1000  # t = 1.0
        vals = [evaluate(e, traj.X[j], traj.t[j]) for j in (k - 1, k + 1)]
        slope = (vals[1] - vals[0]) / (2 * dt)
        assert evaluate(de, traj.X[k], traj.t[k]) == pytest.approx(slope, abs=1e-4)


class TestZeroTest:
    def test_constant_zero(self):
        assert is_identically_zero(Const(0.0), Region.box(1, -1, 1))

    def test_structural_cancellation(self):
        e = parse_expression("x1 - x1", 1)
        assert simplify(e) == Const(0.0)
        assert is_identically_zero(e, Region.box(1, -1, 1))

    def test_nonzero(self):
        assert not is_identically_zero(parse_expression("-x1", 1), Region(((0.5, 2.0),)))

    def test_numerical_zero_without_structure(self):
        e = parse_expression("sin(x1)^2 + cos(x1)^2 - 1", 1)
        assert is_identically_zero(e, Region.box(1, -3, 3))

    def test_domain_error_propagates_with_point(self):
        with pytest.raises(EvaluationError) as info:
            is_identically_zero(parse_expression("ln(x1)", 1), Region(((-2.0, -1.0),)), samples=64)
        assert info.value.x is not None


class TestSimplify:
    @pytest.mark.parametrize("text,expected", [
        ("x1*0", "0"),
        ("x1*1 + 0", "x1"),
        ("2*x1 + 3*x1", "5*x1"),
        ("x1/x1", "1"),
        ("(-2*x1)/(-x1)", "2"),
        ("-(-x1)", "x1"),
        ("x1 - x1 + x2", "x2"),
        ("x1^2*x1", "x1^3"),
    ])
    def test_cases(self, text, expected):
        assert simplify(parse_expression(text, 2)) == simplify(parse_expression(expected, 2))


# --- properties --------------------------------------------------------------

leaves = st.one_of(
    st.integers(-3, 3).map(lambda v: Const(float(v))),
    st.sampled_from([0.5, 1.5, -0.25]).map(Const),
    st.integers(1, 3).map(Var),
    st.just(T),
)


def _grow(children):
    return st.one_of(
        st.tuples(children, children).map(lambda p: add(*p)),
        st.tuples(children, children).map(lambda p: sub(*p)),
        st.tuples(children, children).map(lambda p: mul(*p)),
        children.map(neg),
        st.tuples(children, st.sampled_from([2.0, 3.0])).map(lambda p: pow_(*p)),
    )


polynomials = st.recursive(leaves, _grow, max_leaves=10)


def _depth(e):
    from signstab.expr import Binary, Unary
    if isinstance(e, Unary):
        return 1 + _depth(e.arg)
    if isinstance(e, Binary):
        return 1 + max(_depth(e.left), _depth(e.right))
    return 0


@given(polynomials, st.integers(1, 3), st.integers(0, 2**31))
def test_derivative_matches_central_difference(e, k, seed):
    if _depth(e) > 4:
        return
    d = differentiate(e, k)
    rng = np.random.default_rng(seed)
    fun = lambda x, t: evaluate(e, x, t)  # noqa: E731
    for _ in range(100):
        x = rng.uniform(-1.5, 1.5, 3)
        t = float(rng.uniform(-1.5, 1.5))
        sym = evaluate(d, x, t)
        fd = central_difference(fun, x, t, k, h=1e-6)
        assert abs(sym - fd) <= 1e-6 * (abs(sym) + 1)


@given(polynomials, polynomials, st.integers(1, 3))
def test_derivative_is_linear_exactly(e1, e2, k):
    lhs = differentiate(add(e1, e2), k, simplified=False)
    d1 = differentiate(e1, k, simplified=False)
    d2 = differentiate(e2, k, simplified=False)
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.uniform(-1.5, 1.5, 3)
        t = float(rng.uniform(0, 2))
        assert evaluate(lhs, x, t) == evaluate(d1, x, t) + evaluate(d2, x, t)


@given(polynomials, polynomials, st.integers(1, 3))
def test_simplified_derivative_is_linear_to_roundoff(e1, e2, k):
    lhs = differentiate(add(e1, e2), k)
    d1, d2 = differentiate(e1, k), differentiate(e2, k)
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.uniform(-1.5, 1.5, 3)
        t = float(rng.uniform(0, 2))
        a, b = evaluate(lhs, x, t), evaluate(d1, x, t) + evaluate(d2, x, t)
        assert a == pytest.approx(b, rel=1e-9, abs=1e-9)


@given(polynomials)
def test_simplify_preserves_value(e):
    s = simplify(e)
    rng = np.random.default_rng(3)
    for _ in range(10):
        x = rng.uniform(-1.5, 1.5, 3)
        t = float(rng.uniform(0, 2))
        assert evaluate(s, x, t) == pytest.approx(evaluate(e, x, t), rel=1e-9, abs=1e-9)
