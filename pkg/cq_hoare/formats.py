"""Line-oriented assertion (``.cqa``) and state (``.cqs``) files.

``.cqa``::

    // comment
    (x = 0) : proj(ket(0)) @ q
    (x > 0) : 1/2

``.cqs``::

    {x=0, b=true} : ket(+) * 0.5 @ q
"""

from __future__ import annotations

import logging
from collections.abc import Iterator
from pathlib import Path

import numpy as np

from cq_hoare.classical import (
    ClassicalState,
    Value,
    VarType,
    eval_expr,
    format_expr,
    format_value,
)
from cq_hoare.cqmodel import CqAssertion, CqState, IllFormedStateError, Term
from cq_hoare.gates import OperatorError, OperatorTable, as_operator, evaluate
from cq_hoare.lang.lexer import ParseError
from cq_hoare.lang.parser import Parser
from cq_hoare.lang.printer import _number
from cq_hoare.lang.syntax import OBin, ONum, OpExpr, SourceProgram
from cq_hoare.linalg import (
    LinalgError,
    QuantumLayout,
    StateVector,
    as_dense,
    embed,
    ensemble_from_density,
)

logger = logging.getLogger(__name__)


def _lines(text: str) -> Iterator[tuple[int, str]]:
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("//", 1)[0].strip()
        if line:
            yield n, line


def _parser(line: str, program: SourceProgram) -> Parser:
    return Parser(
        line,
        consts=program.constants,
        registers=program.registers,
        cvars=set(program.types),
        measurements={m.name for m in program.measurements},
    )


def _relocate(exc: ParseError, n: int) -> ParseError:
    return ParseError(exc.message, n, exc.col)


def _value(node: OpExpr, table: OperatorTable, where: str):
    try:
        return evaluate(node, table.environment())
    except (OperatorError, LinalgError) as exc:
        raise ParseError(f"{where}: {exc}") from exc


def _targets(p: Parser) -> tuple[str, ...] | None:
    if not p.accept("@"):
        return None
    return p.plain_qreg("assertion and state files")


# ── assertions ───────────────────────────────────────────────────────


def parse_assertion(text: str, program: SourceProgram) -> CqAssertion:
    """Read a ``.cqa`` text in the declaration context of *program*."""
    table = OperatorTable.for_program(program)
    raw: list[tuple[object, np.ndarray, tuple[str, ...]]] = []
    for n, line in _lines(text):
        try:
            p = _parser(line, program)
            guard = p.expr(0)
            p.expect(":")
            node = p.opexpr(0)
            on = _targets(p)
            if not p.at_eof():
                raise p.error(f"unexpected {p.peek().text!r} after term")
        except ParseError as exc:
            raise _relocate(exc, n) from exc
        value = _value(node, table, f"line {n}")
        if isinstance(value, complex):
            if on:
                m = value * np.eye(program.layout.dim_of(on), dtype=complex)
            else:
                m, on = np.array([[value]], dtype=complex), ()
        else:
            m = as_dense(as_operator(value, f"term on line {n}"))
            if on is None:
                if m.shape[0] != program.layout.dim:
                    raise ParseError(
                        f"matrix of dimension {m.shape[0]} needs '@ qvars'", n, 1
                    )
                on = program.layout.names
            elif m.shape[0] != program.layout.dim_of(on):
                raise ParseError(f"matrix of dimension {m.shape[0]} on {', '.join(on)}", n, 1)
        raw.append((guard, m, tuple(on)))
    used = {q for _, _, on in raw for q in on}
    layout = program.layout.subset(used)
    terms = []
    for guard, m, on in raw:
        big = m[0, 0] * np.eye(layout.dim) if not on else embed(m, on, layout)
        terms.append(Term(guard, big))
    logger.debug("read assertion with %d terms over %s", len(terms), layout)
    return CqAssertion(layout, tuple(terms))


def _matrix_text(m: np.ndarray) -> str:
    m = np.asarray(m, dtype=complex)
    if m.shape == (1, 1) or np.allclose(m, m[0, 0] * np.eye(m.shape[0]), atol=1e-15, rtol=0):
        return _number(complex(np.round(m[0, 0], 15)))
    rows = ", ".join(
        "[" + ", ".join(_number(complex(np.round(c, 15))) for c in row) + "]" for row in m
    )
    return f"[{rows}]"


def format_assertion(theta: CqAssertion) -> str:
    """One ``(guard) : matrix @ qvars`` line per term."""
    if not theta.terms:
        return "// bottom\n"
    names = ", ".join(theta.layout.names)
    out = []
    for t in theta.terms:
        suffix = f" @ {names}" if names else ""
        out.append(f"({format_expr(t.guard)}) : {_matrix_text(t.matrix)}{suffix}")
    return "\n".join(out) + "\n"


# ── states ───────────────────────────────────────────────────────────


def _classical(p: Parser, program: SourceProgram) -> ClassicalState:
    p.expect("{")
    values: dict[str, Value] = {}
    if not p.at("}"):
        while True:
            tok = p.next()
            if tok.text not in program.types:
                raise p.error(f"unknown classical variable {tok.text!r}", tok)
            p.expect("=")
            values[tok.text] = eval_expr(p.expr(0), ClassicalState())
            if not p.accept(","):
                break
    p.expect("}")
    for v in program.cvars:
        if v.name not in values:
            values[v.name] = False if v.type is VarType.BOOL else (v.lo or 0)
    return ClassicalState.of(values)


def parse_state(text: str, program: SourceProgram) -> CqState:
    """Read a ``.cqs`` text; the state lives on the full layout of *program*."""
    table = OperatorTable.for_program(program)
    layout = program.layout
    branches: dict[ClassicalState, list[StateVector]] = {}
    for n, line in _lines(text):
        try:
            p = _parser(line, program)
            sigma = _classical(p, program)
            p.expect(":")
            node = p.opexpr(0)
            on = _targets(p)
            if not p.at_eof():
                raise p.error(f"unexpected {p.peek().text!r} after branch")
        except ParseError as exc:
            raise _relocate(exc, n) from exc
        weight = 1.0
        if isinstance(node, OBin) and node.op == "*" and isinstance(node.right, ONum):
            weight = float(np.real(node.right.value))
            node = node.left
        value = _value(node, table, f"line {n}")
        on = tuple(on) if on is not None else layout.names
        rest = [q for q in layout.names if q not in on]
        size = value.shape[0] if isinstance(value, np.ndarray) else layout.dim_of(on)
        if size != layout.dim_of(on):
            raise ParseError(f"block of dimension {size} on {', '.join(on) or 'no qvars'}", n, 1)
        zero = np.zeros(layout.dim_of(rest), dtype=complex)
        zero[0] = 1.0
        if isinstance(value, np.ndarray) and value.ndim == 1:
            v = StateVector.from_unnormalised(value)
            if v is None:
                raise ParseError("zero vector in state file", n, 1)
            block = [_placed(v.amplitudes, on, rest, layout, zero, weight)]
        else:
            if isinstance(value, complex):
                value = value * np.eye(layout.dim_of(on), dtype=complex)
            rho = as_dense(as_operator(value, f"block on line {n}")) * weight
            block = [
                _placed(sv.amplitudes, on, rest, layout, zero, sv.weight)
                for sv in ensemble_from_density(rho)
            ]
        branches.setdefault(sigma, []).extend(block)
    try:
        state = CqState.from_map(layout, branches)
    except IllFormedStateError as exc:
        raise ParseError(str(exc)) from exc
    logger.debug("read state with %d branches, trace %.6g", len(state.branches), state.trace)
    return state


def _placed(amps, on, rest, layout: QuantumLayout, zero, weight: float) -> StateVector:
    """``|v>_on ⊗ |0>_rest`` permuted into layout order."""
    v = np.kron(np.asarray(amps, dtype=complex), zero)
    order = list(on) + list(rest)
    if order != list(layout.names):
        sub = QuantumLayout(tuple((q, layout.dim_of([q])) for q in order))
        dims = list(sub.dims)
        t = v.reshape(dims).transpose([order.index(q) for q in layout.names])
        v = t.reshape(-1)
    return StateVector(v / np.linalg.norm(v), weight)


def format_state(delta: CqState) -> str:
    out = []
    names = ", ".join(delta.layout.names)
    for sigma, _ in delta.branches:
        assigns = ", ".join(f"{k}={format_value(v)}" for k, v in sigma.items)
        suffix = f" @ {names}" if names else ""
        out.append(f"{{{assigns}}} : {_matrix_text(delta.density(sigma))}{suffix}")
    return "\n".join(out) + ("\n" if out else "")


def read_assertion(path: Path, program: SourceProgram) -> CqAssertion:
    return parse_assertion(path.read_text(encoding="utf-8"), program)


def read_state(path: Path, program: SourceProgram) -> CqState:
    return parse_state(path.read_text(encoding="utf-8"), program)


__all__ = [
    "format_assertion",
    "format_state",
    "parse_assertion",
    "parse_state",
    "read_assertion",
    "read_state",
]
