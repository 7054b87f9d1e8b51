import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nhcartan import expr as ex
from nhcartan.expr import Binary, Const, Unary, Var


def test_parse_sum_of_squares():
    node = ex.parse("u_x^2 + u_y^2", ["u_x", "u_y"])
    assert node == Binary("+", Binary("^", Var("u_x"), Const(2.0)), Binary("^", Var("u_y"), Const(2.0)))


def test_parse_product():
    assert ex.parse("q_y*u_x", ["q_y", "u_x"]) == Binary("*", Var("q_y"), Var("u_x"))


def test_unbalanced_parenthesis_offset():
    with pytest.raises(ex.ParseError) as info:
        ex.parse("2*(u_x", ["u_x"])
    assert info.value.offset == 5


def test_unknown_identifier_is_named():
    with pytest.raises(ex.UnknownIdentifierError) as info:
        ex.parse("u_x + w", ["u_x"])
    assert info.value.name == "w"
    assert "w" in str(info.value)


@pytest.mark.parametrize("bad", [[], ["a", "a"]])
def test_symbol_table_validation(bad):
    with pytest.raises(ValueError):
        ex.parse("1", bad)


@pytest.mark.parametrize(
    "source, value",
    [
        ("2^3^2", 512.0),  # right associative
        ("-2^2", -4.0),  # power binds tighter than unary minus
        ("8/4/2", 1.0),  # left associative
        ("1 - 2 - 3", -4.0),
        ("2 + 3*4", 14.0),
        ("(2 + 3)*4", 20.0),
        ("  1+\t2 ", 3.0),
        ("2^-1", 0.5),
    ],
)
def test_precedence_and_associativity(source, value):
    assert ex.evaluate(ex.parse(source, ["x"]), {}) == value


def test_evaluate_examples():
    node = ex.parse("u_x^2 + u_y^2", ["u_x", "u_y"])
    assert ex.evaluate(node, {"u_x": 3, "u_y": 4}) == 25
    prod = ex.parse("q_y*u_x", ["q_y", "u_x"])
    for ux in (-3.0, 0.5, 1e6):
        assert ex.evaluate(prod, {"q_y": 0.0, "u_x": ux}) == 0


@pytest.mark.parametrize("source, binding", [("1/q_x", 0.0), ("log(q_x)", -1.0), ("sqrt(q_x)", -4.0),
                                             ("log(q_x)", 0.0)])
def test_domain_errors_carry_location(source, binding):
    node = ex.parse(source, ["q_x"])
    with pytest.raises(ex.EvaluationError) as info:
        ex.evaluate(node, {"q_x": binding})
    assert info.value.offset is not None


def test_unbound_variable():
    with pytest.raises(ex.EvaluationError):
        ex.evaluate(ex.parse("x + y", ["x", "y"]), {"x": 1.0})


def test_derivative_examples():
    sq = ex.parse("u_x^2", ["u_x"])
    assert ex.derivative(sq, "u_x", {"u_x": 3.0}) == 6.0
    xy = ex.parse("u_x*u_y", ["u_x", "u_y"])
    for a, b in [(0.0, 0.0), (2.0, -7.0)]:
        assert ex.derivative(xy, ["u_x", "u_y"], {"u_x": a, "u_y": b}) == 1.0
    s = ex.parse("sin(q_y)", ["q_y"])
    exact = ex.derivative(s, "q_y", {"q_y": 0.0})
    h = 1e-6
    fd = (math.sin(h) - math.sin(-h)) / (2 * h)
    assert exact == 1.0
    assert abs(exact - fd) <= 1e-9 * abs(fd)


def test_derivative_rejects_unbound_and_high_order():
    node = ex.parse("x", ["x", "y"])
    with pytest.raises(ex.EvaluationError):
        ex.derivative(node, "y", {"x": 1.0})
    with pytest.raises(ValueError):
        ex.derivative(node, ["x", "x", "x"], {"x": 1.0})


def test_power_rule_variable_exponent():
    node = ex.parse("x^y", ["x", "y"])
    x, y = 1.7, 0.6
    assert ex.derivative(node, "y", {"x": x, "y": y}) == pytest.approx(math.log(x) * x ** y, rel=1e-14)
    assert ex.derivative(node, "x", {"x": x, "y": y}) == pytest.approx(y * x ** (y - 1), rel=1e-14)


def test_constant_folding_only():
    node = ex.parse("2*3 + x", ["x"])
    assert node == Binary("+", Const(6.0), Var("x"))


def test_compile_matches_interpreter(rng):
    nodes = [ex.parse(s, ["x", "y"]) for s in ("sin(x)*y^2", "exp(x - y)/(1 + x^2)", "abs(x) + sign(y)")]
    fn = ex.compile_many(nodes, ["x", "y"])
    for x, y in rng.uniform(-2, 2, size=(20, 2)):
        assert fn(x, y) == tuple(ex.evaluate(n, {"x": x, "y": y}) for n in nodes)


def test_compiled_domain_error_is_located():
    fn = ex.compile_many([ex.parse("1 + log(x)", ["x"])], ["x"])
    with pytest.raises(ex.EvaluationError) as info:
        fn(-1.0)
    assert info.value.offset == 4


# ---------------------------------------------------------------------------
# random expressions
# ---------------------------------------------------------------------------

VARS = ["x", "y", "z"]


def random_ast(rng, depth):
    """Smooth expressions that stay inside every function's domain."""
    if depth == 0 or rng.random() < 0.2:
        if rng.random() < 0.35:
            return Const(float(np.round(rng.uniform(-2, 2), 3)))
        return Var(VARS[rng.integers(3)])
    kind = rng.integers(9)
    a = random_ast(rng, depth - 1)
    if kind == 0:
        return Binary("+", a, random_ast(rng, depth - 1))
    if kind == 1:
        return Binary("-", a, random_ast(rng, depth - 1))
    if kind == 2:
        return Binary("*", a, random_ast(rng, depth - 1))
    if kind == 3:  # denominator bounded away from zero
        b = random_ast(rng, depth - 1)
        return Binary("/", a, Binary("+", Const(2.0), Unary("cos", b)))
    if kind == 4:
        return Unary(["sin", "cos", "neg"][rng.integers(3)], a)
    if kind == 5:
        return Unary("exp", Unary("sin", a))
    if kind == 6:  # log and sqrt of arguments >= 1
        return Unary(["log", "sqrt"][rng.integers(2)], Binary("+", Const(1.0), Binary("^", a, Const(2.0))))
    if kind == 7:
        return Binary("^", a, Const(float(rng.integers(0, 4))))
    return Unary("tan", Binary("*", Const(0.5), Unary("sin", a)))


def central_difference(node, var, env):
    x = env[var]
    h = 1e-6 * max(1.0, abs(x))
    up, down = dict(env), dict(env)
    up[var], down[var] = x + h, x - h
    return (ex.evaluate(node, up) - ex.evaluate(node, down)) / (2 * h)


def derivative_agreement(count=1000, seed=7):
    """Worst relative gap between exact and finite-difference derivatives."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = 0
    while done < count:
        node = random_ast(rng, int(rng.integers(1, 7)))
        env = {v: float(rng.uniform(-2, 2)) for v in VARS}
        var = VARS[rng.integers(3)]
        exact = ex.derivative(node, var, env)
        fd = central_difference(node, var, env)
        worst = max(worst, abs(exact - fd) / max(1.0, abs(exact)))
        done += 1
    return worst, done


def test_random_asts_against_finite_differences():
    worst, done = derivative_agreement()
    assert done == 1000
    assert worst <= 1e-6


def test_second_derivatives_against_finite_differences():
    rng = np.random.default_rng(11)
    for _ in range(200):
        node = random_ast(rng, 4)
        env = {v: float(rng.uniform(-2, 2)) for v in VARS}
        a, b = VARS[rng.integers(3)], VARS[rng.integers(3)]
        exact = ex.derivative(node, [a, b], env)
        d_a = ex.diff(node, a)
        fd = central_difference(d_a, b, env)
        assert abs(exact - fd) <= 1e-6 * max(1.0, abs(exact))


@st.composite
def asts(draw, depth=4):
    if depth == 0 or draw(st.booleans()):
        if draw(st.booleans()):
            return Const(draw(st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)))
        return Var(draw(st.sampled_from(VARS)))
    choice = draw(st.integers(0, 2))
    if choice == 0:
        return Binary(draw(st.sampled_from("+-*/^")), draw(asts(depth - 1)), draw(asts(depth - 1)))
    if choice == 1:
        return Unary(draw(st.sampled_from(("neg",) + ex.FUNCTIONS)), draw(asts(depth - 1)))
    return draw(asts(depth - 1))


@settings(max_examples=300, deadline=None)
@given(asts())
def test_print_parse_round_trip(node):
    once = ex.parse(ex.to_source(node), VARS)
    twice = ex.parse(ex.to_source(once), VARS)
    assert once == twice


@settings(max_examples=200, deadline=None)
@given(asts(), st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_reparse_preserves_value(node, values):
    env = dict(zip(VARS, values))
    try:
        expected = ex.evaluate(node, env)
    except ex.EvaluationError:
        return
    got = ex.evaluate(ex.parse(ex.to_source(node), VARS), env)
    assert got == pytest.approx(expected, rel=1e-12, abs=1e-12)
