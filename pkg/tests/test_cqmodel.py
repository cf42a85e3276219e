"""Tests for cq_hoare.cqmodel."""

from __future__ import annotations

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from cq_hoare.classical import ClassicalState, Const, product_states
from cq_hoare.cqmodel import (
    CqAssertion,
    CqState,
    IllFormedStateError,
    LayoutError,
    MalformedAssertionError,
    NonSubunitalError,
    apply_superop_assertion,
    apply_superop_state,
    assertion_leq,
    eval_assertion,
    expectation,
    linear_combine_assertions,
    linear_combine_states,
    restrict,
    state_distance,
    subst_assertion,
    subst_state,
)
from cq_hoare.lang.parser import parse_expr
from cq_hoare.linalg import KrausChannel, QuantumLayout, RandomSource, StateVector

Q = QuantumLayout.of(("q", 2))
QR = QuantumLayout.of(("q", 2), ("r", 2))
PLUS = np.array([1, 1], dtype=complex) / math.sqrt(2)
P0 = np.diag([1, 0]).astype(complex)
P1 = np.diag([0, 1]).astype(complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)


def _sigma(**kw: int) -> ClassicalState:
    return ClassicalState.of(kw)


class TestCqState:
    def test_point_and_trace(self) -> None:
        d = CqState.point(_sigma(x=0), Q, PLUS, 0.5)
        assert d.trace == pytest.approx(0.5)
        assert_allclose(d.density(_sigma(x=0)), 0.5 * np.outer(PLUS, PLUS))
        assert d.mass(_sigma(x=1)) == 0.0

    def test_trace_above_one_rejected(self) -> None:
        with pytest.raises(IllFormedStateError, match="trace"):
            CqState(
                Q,
                (
                    (_sigma(x=0), (StateVector(PLUS, 0.8),)),
                    (_sigma(x=1), (StateVector(PLUS, 0.8),)),
                ),
            )

    def test_from_map_sorts_and_drops_empty(self) -> None:
        d = CqState.from_map(
            Q, {_sigma(x=2): [StateVector(PLUS, 0.5)], _sigma(x=1): [], _sigma(x=0): []}
        )
        assert d.support == (_sigma(x=2),)

    def test_merge_unions_blocks(self) -> None:
        a = CqState.point(_sigma(x=0), Q, np.array([1, 0]), 0.25)
        b = CqState.point(_sigma(x=0), Q, np.array([0, 1]), 0.25)
        assert_allclose(a.merge(b).density(_sigma(x=0)), np.eye(2) / 4)

    def test_merge_layout_mismatch(self) -> None:
        with pytest.raises(LayoutError):
            CqState.bottom(Q).merge(CqState.bottom(QR))

    def test_pruned_reports_lost_mass(self) -> None:
        d = CqState.point(_sigma(x=0), Q, PLUS, 0.9).merge(
            CqState.point(_sigma(x=1), Q, PLUS, 0.01)
        )
        kept, lost = d.pruned(0.05)
        assert kept.support == (_sigma(x=0),)
        assert lost == pytest.approx(0.01)

    def test_extend_pads_with_zero(self) -> None:
        d = CqState.point(_sigma(), QuantumLayout.of(("r", 2)), np.array([0, 1])).extend(QR)
        assert_allclose(d.density(_sigma()), np.diag([0, 1, 0, 0]))

    def test_restrict(self) -> None:
        d = CqState.point(_sigma(x=0), Q, PLUS, 0.5).merge(CqState.point(_sigma(x=3), Q, PLUS, 0.5))
        assert restrict(d, parse_expr("x > 1")).support == (_sigma(x=3),)

    @pytest.mark.parametrize("guard", ["x > 1", "x = y", "x + y < 3", "false", "true"])
    def test_restriction_moves_into_the_assertion(self, guard: str) -> None:
        rs = RandomSource(5)
        p = parse_expr(guard)
        for _ in range(20):
            delta = _random_state(rs, QR)
            theta = _random_assertion(rs, QR)
            assert expectation(restrict(delta, p), theta) == pytest.approx(
                expectation(delta, theta.guarded(p)), abs=1e-12
            )

    def test_subst_state_merges_collisions(self) -> None:
        d = CqState.point(_sigma(x=0), Q, PLUS, 0.5).merge(CqState.point(_sigma(x=1), Q, PLUS, 0.5))
        moved = subst_state(d, "x", Const(2))
        assert moved.support == (_sigma(x=2),)
        assert moved.trace == pytest.approx(1.0)

    def test_linear_combination_with_negative_coefficient(self) -> None:
        a = CqState.from_density(_sigma(), Q, np.eye(2) / 2)
        b = CqState.from_density(_sigma(), Q, P0 / 2)
        out = linear_combine_states([(1.0, a), (-1.0, b)])
        assert_allclose(out.density(_sigma()), P1 / 2, atol=1e-12)

    def test_linear_combination_must_stay_psd(self) -> None:
        a = CqState.from_density(_sigma(), Q, P0 / 2)
        b = CqState.from_density(_sigma(), Q, P1 / 2)
        with pytest.raises(IllFormedStateError, match="eigenvalue"):
            linear_combine_states([(1.0, a), (-1.0, b)])

    def test_state_distance(self) -> None:
        a = CqState.point(_sigma(), Q, np.array([1, 0]))
        b = CqState.point(_sigma(), Q, np.array([0, 1]))
        assert state_distance(a, b) == pytest.approx(1.0)
        assert state_distance(a, a) == pytest.approx(0.0, abs=1e-12)


class TestCqAssertion:
    def test_evaluate_sums_satisfied_guards(self) -> None:
        theta = CqAssertion.of(Q, (parse_expr("x = 0"), P0), (parse_expr("x >= 0"), 0.5))
        assert_allclose(theta.evaluate(_sigma(x=0)), P0 + 0.5 * np.eye(2))
        assert_allclose(theta.evaluate(_sigma(x=1)), 0.5 * np.eye(2))

    def test_bounds_checked_on_evaluation(self) -> None:
        theta = CqAssertion.of(Q, (parse_expr("true"), P0), (parse_expr("x = 0"), P0))
        with pytest.raises(MalformedAssertionError, match="spectrum"):
            eval_assertion(theta, _sigma(x=0))
        assert_allclose(eval_assertion(theta, _sigma(x=1)), P0)

    def test_non_hermitian_term_rejected(self) -> None:
        with pytest.raises(MalformedAssertionError, match="Hermitian"):
            CqAssertion.of(Q, (parse_expr("true"), np.array([[0, 1], [0, 0]])))

    def test_term_shape_checked(self) -> None:
        with pytest.raises(LayoutError):
            CqAssertion.of(QR, (parse_expr("true"), P0))

    def test_complement(self) -> None:
        theta = CqAssertion.of(Q, (parse_expr("x = 0"), P0))
        assert_allclose(theta.complement().evaluate(_sigma(x=0)), P1)
        assert_allclose(theta.complement().evaluate(_sigma(x=1)), np.eye(2))

    def test_guarded_and_compact(self) -> None:
        theta = CqAssertion.of(Q, (parse_expr("x = 0"), P0), (parse_expr("x = 0"), P1))
        compacted = theta.compact()
        assert len(compacted.terms) == 1
        assert_allclose(compacted.terms[0].matrix, np.eye(2))
        universe = product_states({"x": [1, 2]})
        assert theta.compact(universe).terms == ()
        assert CqAssertion.top(Q).guarded(parse_expr("false")).terms == ()

    def test_extend_tensors_identity(self) -> None:
        theta = CqAssertion.of(QuantumLayout.of(("r", 2)), (parse_expr("true"), P1))
        assert_allclose(theta.extend(QR).evaluate(_sigma()), np.kron(np.eye(2), P1))

    def test_linear_combination(self) -> None:
        theta = linear_combine_assertions(
            [(0.5, CqAssertion.top(Q)), (0.25, CqAssertion.of(Q, (parse_expr("true"), P0)))]
        )
        assert_allclose(theta.evaluate(_sigma()), np.diag([0.75, 0.5]))


class TestExpectation:
    def test_plus_state_against_projectors(self) -> None:
        d = CqState.point(_sigma(x=1), Q, PLUS)
        theta = CqAssertion.of(Q, (parse_expr("x = 1"), P0), (parse_expr("x = 2"), P1))
        assert expectation(d, theta) == pytest.approx(0.5)

    def test_assertion_on_sub_layout(self) -> None:
        d = CqState.point(_sigma(), QR, np.kron(PLUS, [0, 1]))
        theta = CqAssertion.of(QuantumLayout.of(("r", 2)), (parse_expr("true"), P1))
        assert expectation(d, theta) == pytest.approx(1.0)

    def test_uncovered_layout(self) -> None:
        d = CqState.point(_sigma(), Q, PLUS)
        with pytest.raises(LayoutError):
            expectation(d, CqAssertion.top(QR))


class TestLeq:
    def test_holds_and_refutes_with_witness(self) -> None:
        universe = product_states({"x": [0, 1, 2]})
        small = CqAssertion.of(Q, (parse_expr("x = 1"), P0))
        big = CqAssertion.of(Q, (parse_expr("x >= 1"), np.eye(2)))
        ok = assertion_leq(small, big, universe)
        assert ok.holds
        bad = assertion_leq(big, small, universe)
        assert not bad.holds
        assert bad.worst_margin == pytest.approx(-1.0)
        assert bad.witness in (_sigma(x=1), _sigma(x=2))

    def test_pads_layouts(self) -> None:
        universe = [_sigma()]
        on_q = CqAssertion.of(Q, (parse_expr("true"), P0))
        assert assertion_leq(on_q, CqAssertion.top(QR), universe).holds

    def test_empty_universe(self) -> None:
        with pytest.raises(ValueError, match="nonempty"):
            assertion_leq(CqAssertion.top(Q), CqAssertion.top(Q), [])


class TestSuperoperators:
    def test_amplifying_channel_rejected(self) -> None:
        ch = KrausChannel((np.eye(2) * 2,))
        with pytest.raises(NonSubunitalError):
            apply_superop_assertion(CqAssertion.top(Q), ch)

    def test_channel_duality(self) -> None:
        rs = RandomSource(11)
        dephase = KrausChannel((P0, P1), "dephase")
        u = KrausChannel.unitary(rs.unitary(2))
        d = CqState.from_map(QR, {_sigma(x=0): rs.mixture(4)})
        theta = CqAssertion.of(QR, (parse_expr("x = 0"), rs.hermitian_effect(4)))
        for ch in (dephase, u):
            lhs = expectation(apply_superop_state(d, ch, ["r"]), theta)
            rhs = expectation(d, apply_superop_assertion(theta, ch.adjoint(), ["r"]))
            assert lhs == pytest.approx(rhs, abs=1e-10)


def _random_state(rs: RandomSource, layout: QuantumLayout) -> CqState:
    points = product_states({"x": range(4), "y": range(4)})
    chosen = rs.rng.choice(len(points), size=3, replace=False)
    weights = rs.rng.dirichlet(np.ones(3)) * rs.rng.uniform(0.5, 1.0)
    return CqState.from_map(
        layout,
        {
            points[i]: [v.scaled(w) for v in rs.mixture(layout.dim, rank=2)]
            for i, w in zip(chosen, weights)
        },
    )


_EXPRS = ["y", "x + 1", "3 - x", "x * y mod 4", "max(x, y)", "2", "y div 2 + x"]


def test_substitution_duality_sweep() -> None:
    rs = RandomSource(2024)
    for _ in range(500):
        delta = _random_state(rs, Q)
        theta = CqAssertion.of(
            Q, *((parse_expr(f"x = {k}"), rs.hermitian_effect(2)) for k in range(4))
        )
        e = parse_expr(_EXPRS[int(rs.rng.integers(len(_EXPRS)))])
        lhs = expectation(delta, subst_assertion(theta, "x", e))
        rhs = expectation(subst_state(delta, "x", e), theta)
        assert lhs == pytest.approx(rhs, abs=1e-10)


def _random_assertion(rs: RandomSource, layout: QuantumLayout) -> CqAssertion:
    """Disjoint guards on ``x``, one random effect each."""
    return CqAssertion.of(
        layout, *((parse_expr(f"x = {k}"), rs.hermitian_effect(layout.dim)) for k in range(4))
    )


class TestExpectationLaws:
    def test_linear_in_the_state(self) -> None:
        rs = RandomSource(31)
        for _ in range(50):
            d1, d2 = _random_state(rs, QR), _random_state(rs, QR)
            theta = _random_assertion(rs, QR)
            lam, mu = rs.rng.dirichlet(np.ones(3))[:2]
            mixed = linear_combine_states([(lam, d1), (mu, d2)])
            assert expectation(mixed, theta) == pytest.approx(
                lam * expectation(d1, theta) + mu * expectation(d2, theta), abs=1e-12
            )

    def test_linear_in_the_assertion(self) -> None:
        rs = RandomSource(32)
        for _ in range(50):
            delta = _random_state(rs, QR)
            t1, t2 = _random_assertion(rs, QR), _random_assertion(rs, QR)
            lam, mu = rs.rng.dirichlet(np.ones(3))[:2]
            mixed = linear_combine_assertions([(lam, t1), (mu, t2)])
            assert expectation(delta, mixed) == pytest.approx(
                lam * expectation(delta, t1) + mu * expectation(delta, t2), abs=1e-12
            )

    def test_monotone_in_both_arguments(self) -> None:
        rs = RandomSource(33)
        for _ in range(50):
            delta, extra = _random_state(rs, QR), _random_state(rs, QR)
            small = linear_combine_states([(0.5, delta)])
            large = linear_combine_states([(0.5, delta), (0.5, extra)])
            low = _random_assertion(rs, QR).scaled(0.5)
            high = low.plus(_random_assertion(rs, QR).scaled(0.5))
            assert expectation(delta, low) <= expectation(delta, high) + 1e-12
            assert expectation(small, high) <= expectation(large, high) + 1e-12


def _random_two_qubit_channel(rs: RandomSource, scale: float) -> KrausChannel:
    u = rs.unitary(8)
    return KrausChannel(tuple(math.sqrt(scale) * u[4 * i : 4 * (i + 1), :4] for i in range(2)))


@pytest.mark.parametrize("seed", range(100))
def test_channel_duality_sweep(seed: int) -> None:
    rs = RandomSource(600 + seed)
    layout = QuantumLayout.of(("q", 2), ("r", 2), ("s", 2))
    ch = _random_two_qubit_channel(rs, float(rs.rng.uniform(0.3, 1.0)))
    on = [["q", "r"], ["r", "s"], ["s", "q"]][seed % 3]
    delta = _random_state(rs, layout)
    theta = _random_assertion(rs, layout)
    lhs = expectation(apply_superop_state(delta, ch, on), theta)
    rhs = expectation(delta, apply_superop_assertion(theta, ch.adjoint(), on))
    assert lhs == pytest.approx(rhs, abs=1e-10)
