"""Rewrite sugar nodes into core statements.

* ``q̄ := 0`` becomes a sequence of single initialisations.
* ``x := measure q̄`` becomes a measurement named ``COMPUTATIONAL``.
* ``q̄ *= U(e)`` and ``q[e, ...] *= U`` become guarded if-cascades that abort when an index is
  out of range or two selected variables coincide.
"""

from __future__ import annotations

import itertools
import logging

from cq_hoare.classical import Binary, Const, Expr, conj, disj, eq
from cq_hoare.gates import OperatorTable
from cq_hoare.lang.syntax import (
    COMPUTATIONAL,
    Abort,
    If,
    InitQ,
    InitQs,
    Measure,
    MeasureComp,
    ParamUnitary,
    Selected,
    Seq,
    SourceProgram,
    Stmt,
    Unitary,
    UnitaryRef,
    While,
    seq,
)

logger = logging.getLogger(__name__)


def _cascade(cases: list[tuple[Expr, Stmt]], fallback: Stmt) -> Stmt:
    out = fallback
    for cond, body in reversed(cases):
        out = If(cond, body, out)
    return out


def _out_of_range(e: Expr, lo: int, hi: int) -> Expr:
    return disj(Binary("<", e, Const(lo)), Binary(">", e, Const(hi)))


def _apply_family(
    qvars: tuple[str, ...], name: str, selector: Expr | None, table: OperatorTable, pos
) -> Stmt:
    """``q̄ *= name(selector)`` on fixed variables."""
    if selector is None:
        return Unitary(qvars, UnitaryRef(name), pos)
    rng = table.family_range(name)
    if isinstance(selector, Const):
        if rng is not None and not rng[0] <= selector.value <= rng[1]:
            return Abort(pos)
        return Unitary(qvars, UnitaryRef(name, selector.value), pos)
    lo, hi = rng  # typecheck rejects run-time selectors of undeclared families
    members = [
        (eq(selector, k), Unitary(qvars, UnitaryRef(name, k), pos)) for k in range(lo, hi)
    ]
    inner = _cascade(members, Unitary(qvars, UnitaryRef(name, hi), pos))
    return If(_out_of_range(selector, lo, hi), Abort(pos), inner, pos)


def _desugar_param(s: ParamUnitary, program: SourceProgram, table: OperatorTable) -> Stmt:
    registers = program.registers
    slots: list[tuple[str, Expr]] = []
    for t in s.targets:
        if isinstance(t, Selected):
            slots.extend((t.register, e) for e in t.indices)
    if not slots:
        return _apply_family(tuple(s.targets), s.name, s.selector, table, s.pos)

    fixed = [t for t in s.targets if isinstance(t, str)]
    bad: list[Expr] = []
    for reg, e in slots:
        bad.append(_out_of_range(e, 1, len(registers[reg])))
        for name in fixed:
            if name in registers[reg]:
                bad.append(eq(e, registers[reg].index(name) + 1))
    for (ra, ea), (rb, eb) in itertools.combinations(slots, 2):
        if ra == rb:
            bad.append(eq(ea, eb))

    cases: list[tuple[Expr, Stmt]] = []
    ranges = [range(1, len(registers[reg]) + 1) for reg, _ in slots]
    for combo in itertools.product(*ranges):
        it = iter(combo)
        qvars: list[str] = []
        for t in s.targets:
            if isinstance(t, Selected):
                qvars.extend(registers[t.register][next(it) - 1] for _ in t.indices)
            else:
                qvars.append(t)
        if len(set(qvars)) != len(qvars):
            continue
        cond = conj(*(eq(e, k) for (_, e), k in zip(slots, combo)))
        cases.append((cond, _apply_family(tuple(qvars), s.name, s.selector, table, s.pos)))
    body = _cascade(cases[:-1], cases[-1][1]) if cases else Abort(s.pos)
    return If(disj(*bad), Abort(s.pos), body, s.pos)


def desugar_stmt(s: Stmt, program: SourceProgram, table: OperatorTable | None = None) -> Stmt:
    table = table or OperatorTable.for_program(program)
    match s:
        case InitQs(qvars):
            return seq(*(InitQ(q, s.pos) for q in qvars))
        case MeasureComp(target, qvars):
            return Measure(target, COMPUTATIONAL, qvars, s.pos)
        case ParamUnitary():
            return _desugar_param(s, program, table)
        case Seq(stmts):
            return seq(*(desugar_stmt(c, program, table) for c in stmts))
        case If(cond, then, orelse):
            then, orelse = desugar_stmt(then, program, table), desugar_stmt(orelse, program, table)
            return If(cond, then, orelse, s.pos)
        case While(cond, body):
            return While(cond, desugar_stmt(body, program, table), s.pos)
    return s


def desugar(program: SourceProgram, table: OperatorTable | None = None) -> SourceProgram:
    """The same program with a body of core statements only."""
    body = desugar_stmt(program.body, program, table)
    logger.debug("desugared %s", program.name)
    return program.with_body(body)
