"""Tests for the case-study builders and their reference quantities."""

from __future__ import annotations

import math

import numpy as np
import pytest

from cq_hoare.cases import (
    CASES,
    build,
    grover,
    grover_iterations,
    grover_success,
    is_cmp,
    of,
    of_bound,
    of_precision,
    order_of,
    pe,
    pe_precision,
    qft,
    shor,
    shor_key_lemma,
    teleport,
    teleport_state,
)
from cq_hoare.classical import TRUE, ClassicalState
from cq_hoare.cqmodel import CqAssertion, CqState, expectation
from cq_hoare.gates import qft_matrix
from cq_hoare.hoare import check, loops
from cq_hoare.linalg import QuantumLayout, RandomSource
from cq_hoare.rules import validate_rule_instance
from cq_hoare.semantics import denote, initial_state, outcome_distribution, run


def _outcomes(case, names):  # noqa: ANN001, ANN202
    program = case.program
    return outcome_distribution(run(program, initial_state(program)).terminated, names)


class TestReferences:
    def test_grover_quantities(self) -> None:
        assert grover_iterations(2, 1) == 1
        assert grover_success(2, 1) == pytest.approx(1.0)
        assert grover_success(3, 1) == pytest.approx(0.9453125)

    def test_precisions(self) -> None:
        assert pe_precision(1, 0.25) == 3
        assert pe_precision(2, 0.25) == 4
        assert of_precision(15, 0.5) == (4, 11)
        assert of_bound(15, 0.5) == pytest.approx(0.25 / math.log2(15))

    def test_precision_needs_eps_in_unit_interval(self) -> None:
        with pytest.raises(ValueError, match="eps"):
            pe_precision(1, 1.5)

    def test_number_theory(self) -> None:
        assert order_of(7, 15) == 4
        assert order_of(2, 21) == 6
        with pytest.raises(ValueError, match="no order"):
            order_of(5, 15)
        assert [n for n in range(3, 40) if is_cmp(n)] == [15, 21, 33, 35, 39]

    @pytest.mark.parametrize("n", [15, 21, 33])
    def test_key_lemma(self, n: int) -> None:
        report = shor_key_lemma(n)
        assert report.holds
        assert report.failures == []
        assert report.fraction >= report.bound == 0.5

    @pytest.mark.parametrize("n", [9, 16, 13])
    def test_key_lemma_needs_cmp(self, n: int) -> None:
        with pytest.raises(ValueError, match="non-prime-power"):
            shor_key_lemma(n)


class TestBuild:
    def test_registry(self) -> None:
        assert list(CASES) == ["teleport", "grover", "qft", "pe", "of", "shor"]

    def test_string_parameters(self) -> None:
        case = build("grover", {"n": "3", "sols": "{1, 6}"})
        assert case.parameters == {"n": 3, "sols": (1, 6)}
        assert case.reference("K") == 1

    @pytest.mark.parametrize(
        "name, params, match",
        [
            ("nope", {}, "unknown case study"),
            ("grover", {"colour": "1"}, "unknown parameter"),
            ("grover", {"n": "two"}, "bad value"),
            ("teleport", {"n": "2"}, "teleport:"),
            ("grover", {"n": "2", "sols": "0, 1"}, "2\\^n/2"),
            ("of", {"x": "5"}, "gcd"),
            ("shor", {"N": "9"}, "non-prime-power"),
        ],
    )
    def test_errors(self, name: str, params: dict[str, str], match: str) -> None:
        with pytest.raises(ValueError, match=match):
            build(name, params)

    def test_reduced_precision_is_noted(self) -> None:
        case = of(7, 15, t=4)
        assert case.parameters["t"] == 4
        assert "reduced t=4" in case.notes[0]

    def test_universe(self) -> None:
        assert len(grover(2, (2,)).universe()) == 8


class TestTeleport:
    def test_measured_basis(self) -> None:
        case = teleport()
        program = case.program
        out = denote(program, teleport_state(np.array([1, 1]) / math.sqrt(2), program)).state
        assert expectation(out, case.assertion("measured")) == pytest.approx(1.0, abs=1e-10)

    def test_fidelity_for_random_inputs(self) -> None:
        program = teleport().program
        rs = RandomSource(11)
        q2 = program.layout.subset(["q2"])
        fidelities = []
        for _ in range(3):
            psi = rs.pure(2)
            out = denote(program, teleport_state(psi, program)).state
            target = CqAssertion.of(q2, (TRUE, np.outer(psi, psi.conj())))
            fidelities.append(expectation(out, target))
        assert np.mean(fidelities) == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("psi", ["0", "1", "+", "-"])
    def test_triple(self, psi: str) -> None:
        case = teleport(psi)
        assert check(case.precondition(), case.program, case.postcondition()).holds


class TestGrover:
    def test_exact_case(self) -> None:
        case = grover(2, (2,))
        assert case.reference("theta") == pytest.approx(math.pi / 3)
        assert _outcomes(case, ["y"])[(2,)] == pytest.approx(1.0, abs=1e-9)

    def test_two_solutions(self) -> None:
        case = grover(3, (1, 6))
        dist = _outcomes(case, ["y"])
        found = dist.get((1,), 0.0) + dist.get((6,), 0.0)
        assert found == pytest.approx(case.reference("p_succ"), abs=1e-9)


class TestQft:
    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_indexed_entanglement_reproduces_the_dft(self, n: int) -> None:
        case = qft(n)
        program = case.program
        size = 2**n
        layout = program.layout.union(QuantumLayout.of(("w", size)))
        entangled = np.eye(size, dtype=complex).reshape(-1) / math.sqrt(size)
        start = CqState.point(ClassicalState.of(x=1, y=1), layout, entangled)
        out = denote(program, start).state
        expected = qft_matrix(n).reshape(-1) / math.sqrt(size)
        target = CqAssertion.of(layout, (TRUE, np.outer(expected, expected.conj())))
        fidelity = expectation(out, target)
        assert fidelity >= case.reference("fidelity_floor")

    def test_triple(self) -> None:
        case = qft(2)
        assert check(case.precondition(), case.program, case.postcondition()).holds

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_while_certificates(self, n: int) -> None:
        case = qft(n)
        for i, loop in enumerate(loops(case.program)):
            invariant, ranking = case.ranking(i)
            theta = CqAssertion.of(QuantumLayout(), (invariant, 1.0))
            verdict = validate_rule_instance(
                "C-WhileT", case.program, theta=theta, ranking=ranking, loop=loop
            )
            assert verdict.premises_hold
            assert verdict.holds


class TestPhaseEstimation:
    def test_exact_phase(self) -> None:
        case = pe(1, 0.25, 1, 2)
        assert case.reference("t") == 3
        assert _outcomes(case, ["z"])[(4,)] == pytest.approx(1.0, abs=1e-9)
        assert case.reference("p_PE") == pytest.approx(1.0)

    def test_exact_phase_triple(self) -> None:
        case = pe(1, 0.25, 1, 2)
        assert check(case.precondition(), case.program, case.postcondition()).holds

    def test_inexact_phase(self) -> None:
        case = pe(2, 0.25, 1, 3)
        t = case.reference("t")
        assert t == 4
        dist = _outcomes(case, ["z"])
        window = sum(p for (z,), p in dist.items() if abs(1 / 3 - z / 2**t) < 2**-2)
        assert window >= case.reference("bound") == 0.75
        assert window == pytest.approx(case.reference("p_PE"), abs=1e-9)

    @pytest.mark.parametrize(
        "gate, eigvec, z",
        [("T", "1", 1), ("X", "-", 4), ("S", "1", 2), ("Z", "0", 0), ("phase(3, 8)", "1", 3)],
    )
    def test_named_gate_on_its_eigenstate(self, gate: str, eigvec: str, z: int) -> None:
        case = pe(1, 0.25, gate=gate, eigvec=eigvec)
        assert case.parameters["gate"] == gate
        assert case.reference("phi") == pytest.approx(z / 8)
        assert _outcomes(case, ["z"])[(z,)] == pytest.approx(1.0, abs=1e-9)
        assert check(case.precondition(), case.program, case.postcondition()).holds

    def test_gate_from_string_parameters(self) -> None:
        case = build("pe", {"gate": "X", "eigvec": "+"})
        assert (case.parameters["num"], case.parameters["den"]) == (0, 1)

    @pytest.mark.parametrize(
        "kwargs, match",
        [
            ({"gate": "H", "eigvec": "0"}, "not an eigenvector"),
            ({"gate": "CNOT"}, "qubit unitary"),
            ({"eigvec": "i"}, "eigvec must be one of"),
            ({"gate": "phase(1, 5000)"}, "denominator"),
        ],
    )
    def test_unsupported_gates(self, kwargs: dict, match: str) -> None:
        with pytest.raises(ValueError, match=match):
            pe(1, 0.25, **kwargs)


class TestOrderFinding:
    def test_reduced_precision(self) -> None:
        case = of(7, 15, t=4)
        dist = _outcomes(case, ["z"])
        assert dist[(4,)] == pytest.approx(0.5, abs=1e-9)
        assert dist[(4,)] == pytest.approx(case.reference("p_OF"), abs=1e-9)

    @pytest.mark.slow
    def test_full_precision(self) -> None:
        case = of(7, 15, 0.5)
        assert case.reference("t") == 11
        p = _outcomes(case, ["z"])[(4,)]
        assert p >= case.reference("bound")
        assert p == pytest.approx(case.reference("p_OF"), abs=1e-6)


class TestShor:
    def _check(self, case) -> None:  # noqa: ANN001
        n = case.parameters["N"]
        program = case.program
        result = run(program, initial_state(program))
        for sigma in result.terminated.support:
            y = sigma["y"]
            assert 1 < y < n and n % y == 0
        dist = outcome_distribution(result.terminated, ["y"])
        success = sum(dist.get((f,), 0.0) for f in case.reference("factors"))
        assert success >= case.reference("p_Shor")

    def test_reduced_precision(self) -> None:
        case = shor(15, t=4)
        assert case.reference("m") == 2
        self._check(case)

    @pytest.mark.slow
    def test_full_precision(self) -> None:
        self._check(shor(15))
