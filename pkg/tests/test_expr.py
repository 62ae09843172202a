import math

import numpy as np
import pytest

from srfix.errors import ParseError
from srfix.expr import (
    Binary,
    BinaryOp,
    ComplexityMap,
    Const,
    Expr,
    OperatorSet,
    Unary,
    UnaryOp,
    Var,
    check_constraints,
    complexity,
    eval_f64,
    eval_f64_batch,
    format_expr,
    parse,
)

# Expressions printed in the benchmark write-up, with feature names replaced
# by indices; used as parse/print/eval test vectors.
TABLE1 = {
    "g": "sin(-2*x1 + 0.31*x2 + x3 + x4 - 0.09*x4^2 - 0.79)",
    "q": "-0.33*(sin(x3) - 1.54)*(sin(-x1 + x2 + x4) - 0.81)*sin(x3) - 0.81",
    "t": "sin(x1 + x2 - x3 + 0.22*(x2 - 0.29)*(-x2 + x5 - x4) - 0.68)",
    "W": "-0.31*(x4 + (2.09 - x4)*sin(8.02*x2 + 0.98)) - 0.5",
    "Z": "(sin(4.84*x3) + 0.59)*sin(x3 + 1.14)*sin(x2 + 4.84*x3) - 0.94",
}

TABLE2 = [
    "x2 + 0.09*x3*(2*x1 + x5 - x3 - x4 - (1.82*x1 - x5)*(x2 - 0.49*x3) - 3.22) - 0.53",
    "sin(0.06*x0*x5 - 0.25*x2*(-x1 + 2*x2 - x5 + x4 - 8.86) - x3 + 0.06*x4 - 0.4)",
    "0.23*x1*(-x3 + gauss(0.63*x4) + 1) - gauss(x1) + 0.45*x2 - 0.23*x3"
    " + 0.23*gauss((4.24 - 1.19*x5)*(x2 - x3)) + 0.15",
    "x2 - 0.1*x3*(x4*log(abs(x4)) + 2.2) - 0.02*log(abs(x4))"
    " - 0.1*(x2*(x1 - 1.6*x5 + x3 + 1.28) - x3 - 0.48)*log(abs(x2)) - 0.42",
]

TABLE3 = [
    "0.11*(x1 + x2 + log(abs(x2))) - 0.48*x3 - 0.05*x4*(x4 + log(abs(x3)))"
    " - sin(-x2 + 0.14*x5*x3) + 0.11*sinh(x1) - 0.24",
    "0.04*(x0 + x1 + x5 - x3 - (x4 - 0.2)*(x4 + log(abs(x2))))"
    " - sin(-x1 - x2 + 1.23*x3 + 0.58)",
    "0.04*x4*(x2*(x2 - x3) - x4 - log(abs(x2*(x0 + 0.23))))"
    " - sin(-x1 - x2 + 1.19*x3 + 0.61)",
]


class TestParse:
    def test_sin_of_sum(self):
        e = parse("sin(x0 + 0.31)", 4)
        assert e == Unary(UnaryOp.SIN, Binary(BinaryOp.ADD, Var(0), Const(0.31)))

    def test_log_abs_alias(self):
        assert parse("log(abs(x2))", 4) == Unary(UnaryOp.LOG_ABS, Var(2))

    def test_gauss_both_spellings(self):
        assert parse("gauss(x0)", 1) == parse("Gauss(x0)", 1)

    def test_square_sugar(self):
        assert parse("x1^2", 4) == Unary(UnaryOp.SQUARE, Var(1))
        assert parse("(x0 + x1)^2", 4) == Unary(
            UnaryOp.SQUARE, Binary(BinaryOp.ADD, Var(0), Var(1))
        )

    def test_precedence(self):
        e = parse("x0 + x1*x2", 4)
        assert e == Binary(BinaryOp.ADD, Var(0), Binary(BinaryOp.MUL, Var(1), Var(2)))

    def test_left_associativity(self):
        e = parse("x0 - x1 - x2", 4)
        assert e == Binary(
            BinaryOp.SUB, Binary(BinaryOp.SUB, Var(0), Var(1)), Var(2)
        )

    def test_unary_minus_folds_constants(self):
        assert parse("-2*x1", 4) == Binary(BinaryOp.MUL, Const(-2.0), Var(1))

    def test_unary_minus_on_variable(self):
        assert parse("-x1", 4) == Binary(BinaryOp.MUL, Const(-1.0), Var(1))

    def test_whitespace_insensitive(self):
        assert parse(" sin( x0+0.31 ) ", 2) == parse("sin(x0 + 0.31)", 2)

    def test_aliases(self):
        e = parse("sin(mMDT + Mult)", 16, aliases={"mMDT": 3, "Mult": 4})
        assert e == Unary(UnaryOp.SIN, Binary(BinaryOp.ADD, Var(3), Var(4)))

    def test_syntax_error_has_position(self):
        with pytest.raises(ParseError) as err:
            parse("x0 + @", 2)
        assert err.value.position == 5

    def test_unknown_identifier(self):
        with pytest.raises(ParseError, match="unknown identifier"):
            parse("x0 + foo", 2)

    def test_variable_out_of_range(self):
        with pytest.raises(ParseError, match="out of range"):
            parse("x5", 2)

    def test_bare_log_rejected(self):
        with pytest.raises(ParseError, match="log"):
            parse("log(x0)", 2)

    def test_trailing_tokens_rejected(self):
        with pytest.raises(ParseError):
            parse("x0 x1", 2)

    @pytest.mark.parametrize("text", list(TABLE1.values()) + TABLE2 + TABLE3)
    def test_published_expressions_round_trip(self, text):
        e = parse(text, 16)
        assert parse(format_expr(e), 16) == e


class TestFormat:
    def test_const(self):
        assert format_expr(Const(0.5)) == "0.5"

    def test_integral_const_prints_bare(self):
        assert format_expr(Binary(BinaryOp.ADD, Var(0), Const(1))) == "x0 + 1"

    def test_parenthesizes_lower_precedence(self):
        e = Binary(BinaryOp.MUL, Binary(BinaryOp.ADD, Var(0), Var(1)), Var(2))
        assert format_expr(e) == "(x0 + x1)*x2"

    def test_right_nested_subtraction(self):
        e = Binary(BinaryOp.SUB, Var(0), Binary(BinaryOp.SUB, Var(1), Var(2)))
        assert format_expr(e) == "x0 - (x1 - x2)"
        assert parse(format_expr(e), 3) == e

    def test_square_of_operator_needs_parens(self):
        e = Unary(UnaryOp.SQUARE, Binary(BinaryOp.MUL, Var(0), Var(1)))
        assert format_expr(e) == "(x0*x1)^2"
        assert parse(format_expr(e), 2) == e

    def test_square_of_negative_const_needs_parens(self):
        e = Unary(UnaryOp.SQUARE, Const(-2.0))
        assert parse(format_expr(e), 1) == e


def _random_tree(rng, depth=0):
    roll = rng.random()
    if depth >= 5 or roll < 0.3:
        if rng.random() < 0.5:
            return Var(int(rng.integers(6)))
        return Const(float(rng.normal()) * 10 ** int(rng.integers(-3, 4)))
    if roll < 0.55:
        op = list(UnaryOp)[int(rng.integers(len(UnaryOp)))]
        return Unary(op, _random_tree(rng, depth + 1))
    op = list(BinaryOp)[int(rng.integers(len(BinaryOp)))]
    return Binary(op, _random_tree(rng, depth + 1), _random_tree(rng, depth + 1))


class TestRoundTripProperty:
    def test_ten_thousand_random_trees(self):
        rng = np.random.default_rng(2024)
        for _ in range(10_000):
            e = _random_tree(rng)
            assert parse(format_expr(e), 6) == e


class TestEval:
    def test_identity(self):
        assert eval_f64(parse("x0", 1), (3.25,)) == 3.25

    def test_g_tagger_at_zeros(self):
        e = parse(TABLE1["g"], 16)
        # independent double-precision evaluation of the printed text: all
        # terms vanish except the trailing constant, so sin(-0.79)
        assert eval_f64(e, [0.0] * 16) == pytest.approx(-0.7103532724176078, abs=1e-15)

    def test_gauss_zero_is_one(self):
        assert eval_f64(parse("gauss(0)", 1), (0.0,)) == 1.0

    def test_gauss_identity_matches_exp(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            u = float(rng.normal() * 3)
            got = eval_f64(Unary(UnaryOp.GAUSS, Const(u)), ())
            assert got == math.exp(-(u * u))

    def test_log_abs_zero_sentinel(self):
        v = eval_f64(parse("log(abs(x0))", 1), (0.0,))
        assert v == math.log(2.2250738585072014e-308)
        assert v < -700

    def test_division_by_zero_policy(self):
        assert eval_f64(parse("x0/x1", 2), (1.0, 0.0)) > 1e300
        assert eval_f64(parse("x0/x1", 2), (-1.0, 0.0)) < -1e300
        assert eval_f64(parse("x0/x1", 2), (0.0, 0.0)) == 0.0

    def test_eval_is_pure(self):
        e = parse(TABLE1["t"], 16)
        x = list(np.random.default_rng(1).normal(size=16))
        assert eval_f64(e, x) == eval_f64(e, x)

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(99)
        X = rng.normal(size=(64, 6))
        for _ in range(300):
            e = _random_tree(rng)
            batch = eval_f64_batch(e, X)
            for i in range(0, 64, 17):
                scalar = eval_f64(e, X[i])
                if math.isnan(scalar):
                    assert math.isnan(batch[i])
                else:
                    assert batch[i] == scalar


class TestComplexity:
    def test_all_ones(self):
        assert complexity(parse("sin(x0 + 0.31)", 2)) == 4

    def test_weighted_sin(self):
        m = ComplexityMap(operator_weights={UnaryOp.SIN: 8})
        assert complexity(parse("sin(x0 + 0.31)", 2), m) == 11

    def test_single_const(self):
        assert complexity(Const(1.0)) == 1

    def test_additivity(self):
        rng = np.random.default_rng(5)
        m = ComplexityMap(operator_weights={op: 3 for op in BinaryOp})
        for _ in range(200):
            a, b = _random_tree(rng), _random_tree(rng)
            e = Binary(BinaryOp.ADD, a, b)
            assert complexity(e, m) == 3 + complexity(a, m) + complexity(b, m)

    def test_weights_must_be_positive(self):
        with pytest.raises(ValueError):
            ComplexityMap(operator_weights={UnaryOp.SIN: 0})


class TestConstraints:
    TRIG = OperatorSet(
        unary=frozenset({UnaryOp.SIN, UnaryOp.SQUARE}),
        binary=frozenset({BinaryOp.ADD, BinaryOp.SUB, BinaryOp.MUL}),
        nesting_allowed=False,
    )

    def test_nested_sin_rejected(self):
        assert not check_constraints(parse("sin(sin(x0))", 1), self.TRIG)

    def test_sibling_sins_allowed(self):
        assert check_constraints(parse("sin(x0) + sin(x1)", 2), self.TRIG)

    def test_square_inside_sin_allowed(self):
        # squaring is arithmetic, not a nested function
        assert check_constraints(parse("sin(x0 - 0.09*x1^2)", 2), self.TRIG)

    def test_deep_nesting_rejected(self):
        assert not check_constraints(parse("sin(x0 + sin(x1)*x2)", 3), self.TRIG)

    def test_nesting_allowed_flag(self):
        ops = OperatorSet(
            unary=frozenset({UnaryOp.SIN}),
            binary=frozenset({BinaryOp.ADD}),
            nesting_allowed=True,
        )
        assert check_constraints(parse("sin(sin(x0))", 1), ops)

    def test_disallowed_operator(self):
        assert not check_constraints(parse("x0/x1", 2), self.TRIG)
        assert not check_constraints(parse("tan(x0)", 1), self.TRIG)

    def test_subtree_complexity_budget(self):
        ops = OperatorSet(
            unary=frozenset({UnaryOp.SIN}),
            binary=frozenset({BinaryOp.ADD, BinaryOp.MUL}),
            max_subtree_complexity=3,
        )
        # argument of sin has 5 nodes: add, add, x0, x1, x2
        assert not check_constraints(parse("sin(x0+x1+x2)", 3), ops)
        assert check_constraints(parse("sin(x0+x1)", 3), ops)

    def test_operator_set_requires_binary(self):
        with pytest.raises(ValueError):
            OperatorSet(unary=frozenset({UnaryOp.SIN}), binary=frozenset())


class TestInvariants:
    def test_const_must_be_finite(self):
        with pytest.raises(ValueError):
            Const(float("inf"))
        with pytest.raises(ValueError):
            Const(float("nan"))

    def test_var_index_non_negative(self):
        with pytest.raises(ValueError):
            Var(-1)

    def test_expr_nodes_hashable(self):
        e1 = parse("sin(x0 + 0.31)", 2)
        e2 = parse("sin(x0+0.31)", 2)
        assert hash(e1) == hash(e2)
        assert len({e1, e2}) == 1
