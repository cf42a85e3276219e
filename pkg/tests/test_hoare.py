"""Tests for cq_hoare.hoare: wp-based checks, sampling refutation, termination and composition."""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from cq_hoare.cases import grover, qft
from cq_hoare.classical import TRUE, ClassicalState
from cq_hoare.cqmodel import CqAssertion, CqState
from cq_hoare.formats import parse_assertion
from cq_hoare.hoare import (
    MODES,
    CheckOptions,
    PremiseError,
    UniverseError,
    check,
    check_classical_ranking,
    check_ranking_sequence,
    check_semantic,
    loops,
    precondition,
    probcomp_bound,
    universe_for,
)
from cq_hoare.lang.parser import parse, parse_expr, parse_stmt
from cq_hoare.linalg import QuantumLayout, RandomSource
from cq_hoare.renderer import corpus_text

from .randprog import ProgramGenerator, random_assertion

PLUS = np.array([1, 1], dtype=complex) / math.sqrt(2)
P0 = np.diag([1.0, 0.0]).astype(complex)


def _program(body: str, var: str = "int range 0..3") -> str:
    return f"""\
program t
  qvar q : qudit(2)
  var x : {var}
body
  {body}
end
"""


class TestUniverse:
    def test_product_of_declared_ranges(self, coin) -> None:  # noqa: ANN001
        universe = universe_for(coin)
        assert len(universe) == 8
        assert ClassicalState.of(n=3, x=1) in universe

    def test_unbounded_variable(self) -> None:
        with pytest.raises(UniverseError, match="no declared range"):
            universe_for(parse(_program("skip", "int")))

    def test_size_limit(self, coin) -> None:  # noqa: ANN001
        with pytest.raises(UniverseError, match="exceeds the limit"):
            universe_for(coin, max_points=4)

    def test_explicit_universe_must_be_nonempty(self, coin) -> None:  # noqa: ANN001
        with pytest.raises(UniverseError, match="empty"):
            check(CqAssertion.top(), coin, CqAssertion.top(), opts=CheckOptions(universe=[]))


class TestCheck:
    def test_bell_outcomes_agree(self, bell) -> None:  # noqa: ANN001
        agree = parse_assertion("(x = y) : 1", bell)
        verdict = check(CqAssertion.top(), bell, agree)
        assert verdict.holds
        assert verdict.method == "wp-compare"
        assert verdict.worst_margin == pytest.approx(0.0, abs=1e-9)

    def test_refutation_carries_a_witness(self, bell) -> None:  # noqa: ANN001
        differ = parse_assertion("(x != y) : 1", bell)
        verdict = check(parse_assertion("(true) : 1/2", bell), bell, differ)
        assert not verdict.holds
        assert verdict.worst_margin == pytest.approx(-0.5)
        assert verdict.witness is not None

    def test_grover_exact(self) -> None:
        program = parse(corpus_text("grover2.cq"))
        post = parse_assertion(corpus_text("grover2.post.cqa"), program)
        assert check(CqAssertion.top(), program, post).holds

    @pytest.mark.parametrize("s", range(8))
    def test_grover_success_probability(self, s: int) -> None:
        case = grover(3, (s,))
        verdict = check(case.precondition(), case.program, case.postcondition(), "total")
        assert verdict.holds
        assert verdict.worst_margin >= -1e-7

    def test_grover_bound_is_tight(self) -> None:
        case = grover(3, (5,))
        too_much = CqAssertion.of(QuantumLayout(), (TRUE, case.reference("p_succ") + 0.01))
        assert not check(too_much, case.program, case.postcondition()).holds

    def test_abort_refutes_total_but_not_partial(self) -> None:
        program = parse(corpus_text("tiny.cq"))
        top = CqAssertion.top()
        total = check(top, program, top, "total")
        assert not total.holds
        assert total.worst_margin == pytest.approx(-1.0)
        assert check(top, program, top, "partial").holds

    def test_partial_mode_uses_wlp(self) -> None:
        program = parse(_program("while true do skip end"))
        bottom = CqAssertion.bottom()
        verdict = check(CqAssertion.top(), program, bottom, "partial")
        assert verdict.holds
        assert verdict.method == "wlp-compare"
        assert not check(CqAssertion.top(), program, bottom, "total").holds

    def test_truncated_loop_never_holds(self, coin) -> None:  # noqa: ANN001
        verdict = check(
            CqAssertion.bottom(), coin, CqAssertion.top(), opts=CheckOptions(loop_max=1)
        )
        assert not verdict.holds
        assert not verdict.converged
        assert "truncated" in verdict.diagnostics[0]

    def test_precondition_is_padded_to_program_variables(self, bell) -> None:  # noqa: ANN001
        result, universe = precondition(bell, parse_assertion("(x = y) : 1", bell))
        assert result.assertion.layout == bell.layout
        assert len(universe) == 4

    def test_unknown_mode(self, bell) -> None:  # noqa: ANN001
        with pytest.raises(ValueError, match="mode"):
            check(CqAssertion.top(), bell, CqAssertion.top(), "strong")

    def test_values_may_leave_the_declared_range(self) -> None:
        program = parse(_program("x := x + 1; x := x + 1"))
        pre = parse_assertion("(x = 3) : 1", program)
        post = parse_assertion("(x = 5) : 1", program)
        verdict = check(pre, program, post)
        assert verdict.holds
        assert verdict.worst_margin == pytest.approx(0.0, abs=1e-12)
        assert check_semantic(pre, program, post).holds
        assert not check(parse_assertion("(x = 2) : 1", program), program, post).holds


class TestSemanticCheck:
    def test_refutes_a_false_triple(self) -> None:
        program = parse(_program("q *= Z"))
        plus = CqAssertion.of(program.layout, (TRUE, np.outer(PLUS, PLUS.conj())))
        verdict = check_semantic(plus, program, plus)
        assert not verdict.holds
        assert verdict.method == "semantic-sample"
        assert verdict.worst_margin < -0.1

    def test_cannot_refute_a_valid_triple(self, bell) -> None:  # noqa: ANN001
        agree = parse_assertion("(x = y) : 1", bell)
        verdict = check_semantic(CqAssertion.top(), bell, agree, opts=CheckOptions(samples=16))
        assert verdict.holds
        assert "16 simple states" in verdict.diagnostics[0]


class TestRanking:
    def test_grover_loop(self) -> None:
        case = grover(2, (2,))
        invariant, ranking = case.ranking(0)
        (loop,) = loops(case.program)
        verdict = check_classical_ranking(case.program, loop, invariant, ranking)
        assert verdict.holds
        assert "terminates within 1 iterations" in verdict.diagnostics[-1]

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_qft_loops(self, n: int) -> None:
        case = qft(n)
        found = loops(case.program)
        assert len(found) == 2
        for i, loop in enumerate(found):
            invariant, ranking = case.ranking(i)
            assert check_classical_ranking(case.program, loop, invariant, ranking).holds

    def test_divergent_loop_is_refuted(self) -> None:
        program = parse(_program("while true do skip end"))
        (loop,) = loops(program)
        verdict = check_classical_ranking(program, loop, TRUE, parse_expr("x"))
        assert not verdict.holds
        assert "does not decrease" in verdict.diagnostics[0]

    def test_negative_ranking(self) -> None:
        program = parse(_program("while x > 0 do x := x - 1 end"))
        (loop,) = loops(program)
        verdict = check_classical_ranking(program, loop, TRUE, parse_expr("x - 2"))
        assert not verdict.holds
        assert "negative" in verdict.diagnostics[0]

    def test_ranking_sequence_reaching_bottom(self) -> None:
        program = parse(_program("while x = 1 do x := 0 end"))
        (loop,) = loops(program)
        theta = CqAssertion.of(QuantumLayout(), (parse_expr("x = 1"), 1.0))
        verdict = check_ranking_sequence(program, loop, theta, [theta, CqAssertion.bottom()])
        assert verdict.holds

    def test_ranking_sequence_must_reach_bottom(self) -> None:
        program = parse(_program("while x = 1 do x := 0 end"))
        (loop,) = loops(program)
        theta = CqAssertion.of(QuantumLayout(), (parse_expr("x = 1"), 1.0))
        verdict = check_ranking_sequence(program, loop, theta, [theta])
        assert not verdict.holds
        assert any("does not reach" in d for d in verdict.diagnostics)

    def test_empty_ranking_sequence(self) -> None:
        program = parse(_program("while x = 1 do x := 0 end"))
        with pytest.raises(ValueError, match="at least one"):
            check_ranking_sequence(program, loops(program)[0], CqAssertion.top(), [])


class TestProbComp:
    def _parts(self):  # noqa: ANN202
        program = parse(_program("skip", "int range 0..1"))
        s1 = parse_stmt("q := 0; q *= H", program)
        s2 = parse_stmt("x := measure q", program)
        post = CqAssertion.of(QuantumLayout(), (parse_expr("x = 0"), 1.0))
        return program, s1, s2, post

    def test_composed_bound(self) -> None:
        program, s1, s2, post = self._parts()
        pre, verdict = probcomp_bound(program, TRUE, s1, TRUE, PLUS, ["q"], P0, s2, post)
        assert verdict.holds
        assert pre.evaluate(ClassicalState.of(x=1))[0, 0] == pytest.approx(0.5)

    def test_failing_premise(self) -> None:
        program, s1, s2, post = self._parts()
        zero = np.array([1, 0], dtype=complex)
        with pytest.raises(PremiseError, match="first premise"):
            probcomp_bound(program, TRUE, s1, TRUE, zero, ["q"], P0, s2, post)


@pytest.mark.parametrize("seed", range(60))
def test_wp_check_agrees_with_sampled_semantics(seed: int) -> None:
    program = ProgramGenerator(seed, escape=True).program()
    rs = RandomSource(3000 + seed)
    post = random_assertion(rs, program.layout, range(-2, 8))
    pre = CqAssertion.top(program.layout).scaled(float(rs.rng.uniform(0.05, 0.6)))
    opts = CheckOptions(samples=12, seed=seed)
    for mode in MODES:
        verdict = check(pre, program, post, mode, opts)
        if verdict.holds:
            assert check_semantic(pre, program, post, mode, opts).holds
            continue
        witness = CqState.point(verdict.witness, program.layout, verdict.direction)
        replay = check_semantic(
            pre, program, post, mode, replace(opts, samples=0), states=[witness]
        )
        assert replay.worst_margin == pytest.approx(verdict.worst_margin, abs=1e-8)


@pytest.mark.parametrize("seed", range(60))
def test_total_correctness_implies_partial(seed: int) -> None:
    program = ProgramGenerator(seed).program()
    rs = RandomSource(4000 + seed)
    post = random_assertion(rs, program.layout)
    for scale in (0.1, 0.3, 0.6, 0.9):
        pre = CqAssertion.top(program.layout).scaled(scale)
        if check(pre, program, post, "total").holds:
            assert check(pre, program, post, "partial").holds
