"""Tests for cq_hoare.classical."""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cq_hoare.classical import (
    Binary,
    Call,
    ClassicalState,
    Const,
    Distribution,
    DistributionError,
    EvaluationError,
    Member,
    Quant,
    Unary,
    Var,
    VarType,
    conj,
    continued_fraction_order,
    eval_expr,
    eval_pred,
    format_expr,
    free_vars,
    infer_type,
    product_states,
    substitute,
    update,
)
from cq_hoare.lang.parser import parse_expr

TYPES = {"x": VarType.INT, "y": VarType.INT, "b": VarType.BOOL}


class TestClassicalState:
    def test_order_independent_equality(self) -> None:
        assert ClassicalState.of(x=1, y=2) == ClassicalState.of(y=2, x=1)
        assert hash(ClassicalState.of(x=1, y=2)) == hash(ClassicalState.of(y=2, x=1))

    def test_bool_and_int_are_distinct(self) -> None:
        assert ClassicalState.of(b=True) != ClassicalState.of(b=1)

    def test_unbound_variable(self) -> None:
        with pytest.raises(EvaluationError, match="unbound"):
            ClassicalState.of(x=1)["y"]

    def test_update_checks_declared_type(self) -> None:
        sigma = ClassicalState.of(x=0, b=False)
        assert update(sigma, "x", 3)["x"] == 3
        with pytest.raises(EvaluationError, match="cannot assign"):
            update(sigma, "x", True, TYPES)

    def test_product_states(self) -> None:
        states = product_states({"y": [0, 1], "b": [False, True]})
        assert len(states) == 4
        assert states[0] == ClassicalState.of(b=False, y=0)


class TestEval:
    @pytest.mark.parametrize(
        "text, expected",
        [
            ("x + 2 * y", 7),
            ("x - y ^ 2", -1),
            ("2 ^ 3 ^ 2", 512),
            ("7 div 2", 3),
            ("-7 mod 3", 2),
            ("gcd(12, 18)", 6),
            ("powmod(3, 4, 7)", 4),
            ("abs(x - 5)", 2),
            ("min(x, y) + max(x, y)", 5),
            ("contfrac(512, 2048, 15)", 4),
            ("contfrac(1536, 2048, 15)", 4),
            ("contfrac(0, 2048, 15)", 1),
        ],
    )
    def test_arithmetic(self, text: str, expected: int) -> None:
        assert eval_expr(parse_expr(text), ClassicalState.of(x=3, y=2)) == expected

    @pytest.mark.parametrize(
        "text, expected",
        [
            ("x < y or b", True),
            ("not b and x = 3", False),
            ("b => x = 0", False),
            ("false => x = 0", True),
            ("x in {1, 3, 5}", True),
            ("y in {}", False),
            ("exists k in 0..3 . k * k = 4", True),
            ("forall k in 1..x . k <= y", False),
            ("forall k in 1..0 . false", True),
        ],
    )
    def test_predicates(self, text: str, expected: bool) -> None:
        assert eval_pred(parse_expr(text), ClassicalState.of(x=3, y=2, b=True)) is expected

    @pytest.mark.parametrize(
        "text, match",
        [
            ("x div 0", "by zero"),
            ("x mod 0", "by zero"),
            ("2 ^ (0 - 1)", "negative exponent"),
            ("x and b", "boolean"),
            ("b + 1", "integer"),
            ("z + 1", "unbound"),
            ("b = 1", "compare"),
        ],
    )
    def test_evaluation_errors(self, text: str, match: str) -> None:
        with pytest.raises(EvaluationError, match=match):
            eval_expr(parse_expr(text), ClassicalState.of(x=3, b=True))


class TestContinuedFractions:
    def test_recovers_order_from_exact_peak(self) -> None:
        # s/r = 3/4 at t = 11
        assert continued_fraction_order(3 * 512, 2048, 15) == 4

    def test_half_gives_two(self) -> None:
        assert continued_fraction_order(1024, 2048, 15) == 2

    def test_no_convergent_below_modulus(self, caplog) -> None:  # noqa: ANN001
        with caplog.at_level("DEBUG", logger="cq_hoare.classical"):
            assert continued_fraction_order(1, 3, 2) == 0
        assert "reached the modulus" in caplog.text
        assert "returning 0" in caplog.text

    def test_bad_arguments(self) -> None:
        with pytest.raises(EvaluationError):
            continued_fraction_order(1, 0, 5)


class TestTyping:
    @pytest.mark.parametrize(
        "text, expected",
        [
            ("x + 1", VarType.INT),
            ("x < y", VarType.BOOL),
            ("b = true", VarType.BOOL),
            ("exists k in 0..x . k = y", VarType.BOOL),
            ("gcd(x, y)", VarType.INT),
        ],
    )
    def test_infer(self, text: str, expected: VarType) -> None:
        assert infer_type(parse_expr(text), TYPES) is expected

    @pytest.mark.parametrize("text", ["x and b", "b < 1", "x = b", "gcd(x)", "z + 1"])
    def test_ill_typed(self, text: str) -> None:
        with pytest.raises(EvaluationError):
            infer_type(parse_expr(text), TYPES)


class TestSubstitution:
    def test_free_vars_exclude_bound(self) -> None:
        e = parse_expr("exists k in 0..x . k = y")
        assert free_vars(e) == {"x", "y"}

    def test_bound_variable_untouched(self) -> None:
        e = parse_expr("exists k in 0..3 . k = y")
        assert substitute(e, "k", Const(9)) == e

    def test_capture_avoided(self) -> None:
        e = parse_expr("exists k in 0..3 . k = y")
        out = substitute(e, "y", Var("k"))
        assert isinstance(out, Quant)
        assert out.var != "k"
        sigma = ClassicalState.of(k=5)
        assert eval_pred(out, sigma) is False
        assert eval_pred(substitute(e, "y", Const(2)), sigma) is True

    def test_conj_drops_true(self) -> None:
        p = parse_expr("x > 0")
        assert conj(Const(True), p) == p
        assert conj() == Const(True)


class TestFormatting:
    @pytest.mark.parametrize(
        "text",
        [
            "x + y * 2",
            "(x + y) * 2",
            "not (b and x < 3)",
            "x - (y - 1)",
            "2 ^ (x ^ y)",
            "x in {1, 2} or b",
            "exists k in 0..x . k = y",
            "b => x = 0 => y = 1",
            "-x + (-3)",
        ],
    )
    def test_format_reparses_to_same_tree(self, text: str) -> None:
        e = parse_expr(text)
        assert parse_expr(format_expr(e)) == e


class TestDistribution:
    def test_uniform(self) -> None:
        d = Distribution.uniform(1, 4)
        assert d.total == pytest.approx(1.0)
        assert [v for v, _ in d.atoms] == [1, 2, 3, 4]

    def test_sub_probability_allowed(self) -> None:
        assert Distribution.from_pairs([(0, 0.25), (1, 0.5)]).total == pytest.approx(0.75)

    @pytest.mark.parametrize(
        "pairs, match",
        [
            ([(0, 0.7), (1, 0.7)], "exceeds"),
            ([(0, -0.1)], "negative"),
            ([(0, 0.5), (0, 0.5)], "repeated"),
            ([(True, 0.5), (1, 0.5)], "mixes"),
        ],
    )
    def test_invalid(self, pairs: list, match: str) -> None:
        with pytest.raises(DistributionError, match=match):
            Distribution.from_pairs(pairs)

    def test_empty_uniform_range(self) -> None:
        with pytest.raises(DistributionError):
            Distribution.uniform(3, 2)


# ── substitution law ────────────────────────────────────────────────────

_leaves = st.one_of(
    st.integers(-3, 3).map(Const),
    st.sampled_from(["x", "y"]).map(Var),
)


def _extend(children: st.SearchStrategy) -> st.SearchStrategy:
    return st.one_of(
        st.tuples(st.sampled_from(["+", "-", "*"]), children, children).map(
            lambda t: Binary(*t)
        ),
        children.map(lambda a: Unary("-", a)),
        st.tuples(children, children).map(lambda t: Call("max", t)),
    )


_int_exprs = st.recursive(_leaves, _extend, max_leaves=6)
_preds = st.one_of(
    st.tuples(st.sampled_from(["<", "=", ">="]), _int_exprs, _int_exprs).map(lambda t: Binary(*t)),
    st.tuples(_int_exprs, st.lists(_int_exprs, max_size=3)).map(
        lambda t: Member(t[0], tuple(t[1]))
    ),
    _int_exprs.map(lambda e: Quant("exists", "k", Const(0), Const(2), Binary("=", Var("k"), e))),
)


@settings(max_examples=500, deadline=None)
@given(
    p=_preds,
    r=_int_exprs,
    name=st.sampled_from(["x", "y"]),
    x=st.integers(-4, 4),
    y=st.integers(-4, 4),
)
def test_substitution_law(p, r, name: str, x: int, y: int) -> None:  # noqa: ANN001
    sigma = ClassicalState.of(x=x, y=y)
    lhs = eval_expr(substitute(p, name, r), sigma)
    rhs = eval_expr(p, update(sigma, name, eval_expr(r, sigma)))
    assert lhs == rhs
