"""Tests for the .cqa / .cqs readers and writers."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose

from cq_hoare.classical import TRUE, ClassicalState
from cq_hoare.cqmodel import CqAssertion, CqState, state_distance
from cq_hoare.formats import (
    format_assertion,
    format_state,
    parse_assertion,
    parse_state,
    read_assertion,
    read_state,
)
from cq_hoare.lang.lexer import ParseError
from cq_hoare.lang.parser import parse, parse_expr
from cq_hoare.linalg import QuantumLayout, RandomSource
from cq_hoare.renderer import corpus_text

P0 = np.diag([1.0, 0.0]).astype(complex)
P1 = np.diag([0.0, 1.0]).astype(complex)


class TestParseAssertion:
    def test_scalar_terms_have_no_quantum_part(self, bell) -> None:  # noqa: ANN001
        theta = parse_assertion("// comment\n(x = y) : 1\n", bell)
        assert theta.layout == QuantumLayout()
        assert len(theta.terms) == 1
        assert_allclose(theta.evaluate(ClassicalState.of(x=1, y=1)), [[1.0]])
        assert_allclose(theta.evaluate(ClassicalState.of(x=0, y=1)), [[0.0]])

    def test_targets_select_a_sub_layout(self, bell) -> None:  # noqa: ANN001
        theta = parse_assertion("(true) : proj(ket(+)) @ q", bell)
        assert theta.layout.names == ("q",)
        assert_allclose(theta.evaluate(ClassicalState.of(x=0, y=0)), np.full((2, 2), 0.5))

    def test_terms_are_embedded_into_a_common_layout(self, bell) -> None:  # noqa: ANN001
        text = "(x = 0) : proj(ket(0)) @ q\n(true) : proj(ket(1)) @ r\n"
        theta = parse_assertion(text, bell)
        assert theta.layout.names == ("q", "r")
        expected = np.kron(P0, np.eye(2)) + np.kron(np.eye(2), P1)
        assert_allclose(theta.evaluate(ClassicalState.of(x=0, y=0)), expected)
        assert_allclose(theta.evaluate(ClassicalState.of(x=1, y=0)), np.kron(np.eye(2), P1))

    def test_scalar_with_targets_is_a_multiple_of_identity(self, bell) -> None:  # noqa: ANN001
        theta = parse_assertion("(true) : 1/4 @ r", bell)
        assert_allclose(theta.evaluate(ClassicalState.of(x=0, y=0)), 0.25 * np.eye(2))

    def test_full_dimension_needs_no_targets(self, bell) -> None:  # noqa: ANN001
        theta = parse_assertion("(true) : proj(ket(0, 0))", bell)
        assert theta.layout == bell.layout

    def test_empty_text_is_bottom(self, bell) -> None:  # noqa: ANN001
        theta = parse_assertion("// bottom\n", bell)
        assert theta.terms == ()

    @pytest.mark.parametrize(
        "text, match",
        [
            ("(true) : proj(ket(0))", "needs '@ qvars'"),
            ("(true) : H @ q, r", "dimension 2 on q, r"),
            ("(true) 1", "line 1"),
            ("(true) : 1\n(true) : 1 extra", "after term"),
        ],
    )
    def test_errors(self, bell, text: str, match: str) -> None:  # noqa: ANN001
        with pytest.raises(ParseError, match=match):
            parse_assertion(text, bell)

    def test_error_lines_count_from_the_file_start(self, bell) -> None:  # noqa: ANN001
        with pytest.raises(ParseError) as info:
            parse_assertion("// one\n(true) : 1\n(x = ) : 1\n", bell)
        assert info.value.line == 3


class TestFormatAssertion:
    def test_bottom(self) -> None:
        assert format_assertion(CqAssertion.bottom()) == "// bottom\n"

    def test_scalar_term(self) -> None:
        theta = CqAssertion.of(QuantumLayout(), (TRUE, 0.5))
        assert format_assertion(theta) == "(true) : 0.5\n"

    def test_written_assertion_reads_back(self, bell) -> None:  # noqa: ANN001
        rs = RandomSource(3)
        theta = CqAssertion.of(
            bell.layout,
            (parse_expr("x = 0"), rs.hermitian_effect(4).real.astype(complex)),
            (parse_expr("y != x"), 0.5 * np.eye(4)),
        )
        again = parse_assertion(format_assertion(theta), bell)
        for sigma in (ClassicalState.of(x=x, y=y) for x in (0, 1) for y in (0, 1)):
            assert_allclose(again.evaluate(sigma), theta.evaluate(sigma), atol=1e-12)


class TestParseState:
    def test_basis_state(self, bell) -> None:  # noqa: ANN001
        delta = parse_state("{x=0, y=0} : ket(0, 0) @ q, r\n", bell)
        assert delta.trace == pytest.approx(1.0)
        sigma = ClassicalState.of(x=0, y=0)
        assert delta.support == (sigma,)
        assert_allclose(delta.density(sigma), np.diag([1.0, 0, 0, 0]), atol=1e-12)

    def test_missing_qubits_start_in_zero(self, bell) -> None:  # noqa: ANN001
        delta = parse_state("{x=1} : ket(1) @ r", bell)
        sigma = ClassicalState.of(x=1, y=0)
        assert delta.support == (sigma,)
        assert_allclose(delta.density(sigma), np.diag([0.0, 1.0, 0, 0]), atol=1e-12)

    def test_corpus_coin_state(self) -> None:
        program = parse(corpus_text("coin.cq"))
        delta = parse_state(corpus_text("coin.cqs"), program)
        assert delta.trace == pytest.approx(1.0)
        first = ClassicalState.of(x=0, y=0, n=0, b=False)
        second = ClassicalState.of(x=1, y=0, n=0, b=False)
        assert set(delta.support) == {first, second}
        assert_allclose(delta.density(first), np.full((2, 2), 0.25), atol=1e-12)
        assert_allclose(delta.density(second), 0.25 * np.eye(2), atol=1e-12)

    def test_density_literal(self, bell) -> None:  # noqa: ANN001
        delta = parse_state("{x=0, y=1} : proj(ket(+)) * 0.5 @ q", bell)
        assert delta.trace == pytest.approx(0.5)

    @pytest.mark.parametrize(
        "text, match",
        [
            ("{w=0} : ket(0, 0)", "unknown classical variable"),
            ("{x=0} : ket(0)", "block of dimension 2"),
            ("{x=0} : ket(0, 0)\n{x=1} : ket(0, 0)", "trace"),
            ("{x=0} : ket(0) @ q junk", "after branch"),
        ],
    )
    def test_errors(self, bell, text: str, match: str) -> None:  # noqa: ANN001
        with pytest.raises(ParseError, match=match):
            parse_state(text, bell)


class TestFormatState:
    def test_written_state_reads_back(self, bell) -> None:  # noqa: ANN001
        plus = np.array([1, 1], dtype=complex) / math.sqrt(2)
        vector = np.kron(plus, [1, 0])
        delta = CqState.point(ClassicalState.of(x=1, y=0), bell.layout, vector, 0.75)
        text = format_state(delta)
        assert text.startswith("{x=1, y=0} : [[")
        assert text.rstrip().endswith("@ q, r")
        assert state_distance(parse_state(text, bell), delta) < 1e-12

    def test_empty_state(self, bell) -> None:  # noqa: ANN001
        assert format_state(CqState.bottom(bell.layout)) == ""


class TestFiles:
    def test_read_helpers(self, bell_files: Path) -> None:
        program = parse((bell_files / "bell.cq").read_text())
        agree = read_assertion(bell_files / "agree.cqa", program)
        assert agree.layout == QuantumLayout()
        start = read_state(bell_files / "start.cqs", program)
        assert start.support == (ClassicalState.of(x=0, y=0),)
