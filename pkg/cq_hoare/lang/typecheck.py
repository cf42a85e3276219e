"""Static checks over a parsed program, plus the variable sets var(S), change(S) and qv(S)."""

from __future__ import annotations

import logging
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

import numpy as np

from cq_hoare.classical import (
    Const,
    EvaluationError,
    Expr,
    VarType,
    format_expr,
    free_vars,
    infer_type,
)
from cq_hoare.gates import OperatorError, OperatorTable
from cq_hoare.lang.syntax import (
    COMPUTATIONAL,
    Assign,
    If,
    InitQ,
    InitQs,
    Measure,
    MeasureComp,
    ParamUnitary,
    Pos,
    RandAssign,
    Selected,
    SourceProgram,
    Stmt,
    Unitary,
    UnitaryRef,
    While,
    walk,
)
from cq_hoare.linalg import NORM_TOL, LinalgError, as_dense

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Diagnostic:
    message: str
    pos: Pos | None = None

    def __str__(self) -> str:
        if self.pos is None:
            return self.message
        return f"line {self.pos[0]}, column {self.pos[1]}: {self.message}"


class TypecheckError(ValueError):
    """A program with at least one diagnostic."""

    def __init__(self, diagnostics: list[Diagnostic]) -> None:
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


@dataclass
class TypecheckReport:
    diagnostics: list[Diagnostic] = field(default_factory=list)
    var: frozenset[str] = frozenset()
    change: frozenset[str] = frozenset()
    qv: frozenset[str] = frozenset()
    operator_dims: dict[str, int] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.diagnostics


# ── Variable sets ────────────────────────────────────────────────────


def _stmt_exprs(s: Stmt) -> list[Expr]:
    match s:
        case Assign(_, expr):
            return [expr]
        case RandAssign(_, dist):
            return list(dist.args)
        case If(cond, _, _) | While(cond, _):
            return [cond]
        case ParamUnitary(targets, _, selector):
            out = [e for t in targets if isinstance(t, Selected) for e in t.indices]
            return out + ([selector] if selector is not None else [])
    return []


def changed_vars(s: Stmt) -> frozenset[str]:
    """change(S): classical variables S may write."""
    out: set[str] = set()
    for node in walk(s):
        if isinstance(node, (Assign, RandAssign, Measure, MeasureComp)):
            out.add(node.target)
    return frozenset(out)


def classical_vars(s: Stmt) -> frozenset[str]:
    """var(S): classical variables S reads or writes."""
    out: set[str] = set(changed_vars(s))
    for node in walk(s):
        for e in _stmt_exprs(node):
            out |= free_vars(e)
    return frozenset(out)


def quantum_vars(s: Stmt, registers: Mapping[str, tuple[str, ...]] | None = None) -> frozenset[str]:
    """qv(S); a run-time selection counts every element of its register."""
    registers = registers or {}
    out: set[str] = set()
    for node in walk(s):
        match node:
            case InitQ(qvar):
                out.add(qvar)
            case InitQs(qvars) | Measure(_, _, qvars) | MeasureComp(_, qvars) | Unitary(qvars, _):
                out.update(qvars)
            case ParamUnitary(targets, _, _):
                for t in targets:
                    if isinstance(t, Selected):
                        out.update(registers.get(t.register, ()))
                    else:
                        out.add(t)
    return frozenset(out)


# ── Checker ──────────────────────────────────────────────────────────


class _Checker:
    def __init__(self, program: SourceProgram, table: OperatorTable) -> None:
        self.program = program
        self.table = table
        self.types = program.types
        self.layout = program.layout
        self.registers = program.registers
        self.dims: dict[str, int] = {}
        self.diagnostics: list[Diagnostic] = []

    def error(self, message: str, pos: Pos | None = None) -> None:
        self.diagnostics.append(Diagnostic(message, pos))

    def run(self) -> None:
        self.check_declarations()
        for node in walk(self.program.body):
            self.check_stmt(node)

    # declarations

    def check_declarations(self) -> None:
        p = self.program
        names = (
            [q.name for q in p.qvars] + [v.name for v in p.cvars] + [c.name for c in p.consts]
            + [u.name for u in p.unitaries] + [m.name for m in p.measurements]
        )
        for name in sorted({n for n in names if names.count(n) > 1}):
            self.error(f"duplicate declaration of {name!r}")
        for v in p.cvars:
            if v.lo is not None and v.hi is not None and v.hi < v.lo:
                self.error(f"variable {v.name!r} has empty range {v.lo}..{v.hi}", v.pos)
        for u in p.unitaries:
            dim = self.operator_dim(u.name, None, u.pos)
            if dim is not None:
                self.dims[u.name] = dim
        for m in p.measurements:
            self.check_measurement(m.name, m.pos)

    def check_measurement(self, name: str, pos: Pos | None) -> int | None:
        decl = self.program.measurement(name)
        if decl is None:
            self.error(f"unknown measurement {name!r}", pos)
            return None
        try:
            ops = [as_dense(op) for op in self.table.measurement(name, 0)]
        except (OperatorError, LinalgError, EvaluationError) as exc:
            self.error(f"measurement {name!r}: {exc}", pos)
            return None
        if len({op.shape for op in ops}) != 1 or ops[0].shape[0] != ops[0].shape[1]:
            self.error(f"measurement {name!r} needs square operators of one shape", pos)
            return None
        d = ops[0].shape[0]
        total = sum(op.conj().T @ op for op in ops)
        if not np.allclose(total, np.eye(d), atol=NORM_TOL, rtol=0.0):
            self.error(f"measurement {name!r} violates the completeness equation", pos)
        return d

    def operator_dim(self, name: str, index: int | None, pos: Pos | None) -> int | None:
        """Dimension of a unitary (for families, of the first member that instantiates)."""
        decl = self.table.decl(name)
        if decl is not None and decl.is_family and index is None:
            first_error = None
            for k in range(decl.lo, decl.hi + 1):
                try:
                    return self.table.unitary(UnitaryRef(name, k)).shape[0]
                except (OperatorError, LinalgError, EvaluationError) as exc:
                    first_error = first_error or exc
            self.error(f"no member of family {name!r} is a unitary: {first_error}", pos)
            return None
        if decl is None and index is None and self.table.is_family(name):
            index = 1
        try:
            return self.table.unitary(UnitaryRef(name, index)).shape[0]
        except (OperatorError, LinalgError, EvaluationError) as exc:
            self.error(f"{UnitaryRef(name, index)}: {exc}", pos)
            return None

    # statements

    def expect(self, e: Expr, want: VarType, pos: Pos | None, where: str) -> None:
        try:
            got = infer_type(e, self.types)
        except EvaluationError as exc:
            self.error(f"{where}: {exc}", pos)
            return
        if got != want:
            self.error(f"{where}: expected {want.value}, got {got.value} in {format_expr(e)}", pos)

    def target(self, name: str, pos: Pos | None, want: VarType | None = None) -> VarType | None:
        if name not in self.types:
            self.error(f"assignment to undeclared variable {name!r}", pos)
            return None
        if want is not None and self.types[name] != want:
            self.error(f"{name!r} must be {want.value} to receive a measurement outcome", pos)
        return self.types[name]

    def qvars(self, names: Iterable[str], pos: Pos | None) -> int | None:
        names = list(names)
        if len(set(names)) != len(names):
            self.error(f"quantum variables are not distinct: {', '.join(names)}", pos)
            return None
        unknown = [n for n in names if n not in self.layout]
        if unknown:
            self.error(f"undeclared quantum variables: {', '.join(unknown)}", pos)
            return None
        return self.layout.dim_of(names)

    def check_stmt(self, s: Stmt) -> None:
        pos = getattr(s, "pos", None)
        match s:
            case Assign(target, expr):
                t = self.target(target, pos)
                if t is not None:
                    self.expect(expr, t, pos, f"assignment to {target}")
            case RandAssign(target, dist):
                t = self.target(target, pos)
                if dist.kind == "unif":
                    for a in dist.args:
                        self.expect(a, VarType.INT, pos, "unif bound")
                        if free_vars(a):
                            self.error("unif bounds must be constants", pos)
                    if t is not None and t is not VarType.INT:
                        self.error(f"unif assigns integers, {target!r} is {t.value}", pos)
                elif t is not None:
                    for a in dist.args:
                        self.expect(a, t, pos, f"distribution for {target}")
                if dist.kind == "explicit" and sum(dist.probs) > 1.0 + 1e-12:
                    self.error("distribution probabilities sum above 1", pos)
            case Measure(target, measurement, qvars):
                self.target(target, pos, VarType.INT)
                d = self.qvars(qvars, pos)
                if measurement == COMPUTATIONAL or d is None:
                    return
                md = self.check_measurement(measurement, pos)
                if md is not None and md != d:
                    self.error(
                        f"measurement {measurement!r} has dimension {md}, "
                        f"{', '.join(qvars)} has {d}",
                        pos,
                    )
            case MeasureComp(target, qvars):
                self.target(target, pos, VarType.INT)
                self.qvars(qvars, pos)
            case InitQ(qvar):
                self.qvars([qvar], pos)
            case InitQs(qvars):
                self.qvars(qvars, pos)
            case Unitary(qvars, ref):
                d = self.qvars(qvars, pos)
                if ref.index is None and self.table.is_family(ref.name):
                    self.error(f"family {ref.name!r} is applied without a selector", pos)
                    return
                od = self.operator_dim(ref.name, ref.index, pos)
                if d is not None and od is not None and d != od:
                    self.error(
                        f"{ref} has dimension {od}, {', '.join(qvars)} has dimension {d}", pos
                    )
            case ParamUnitary(targets, name, selector):
                self.check_param_unitary(targets, name, selector, pos)
            case If(cond, _, _) | While(cond, _):
                self.expect(cond, VarType.BOOL, pos, "guard")

    def check_param_unitary(self, targets, name: str, selector: Expr | None, pos) -> None:
        dim = 1
        fixed: list[str] = []
        for t in targets:
            if isinstance(t, Selected):
                elements = self.registers.get(t.register)
                if elements is None:
                    self.error(f"{t.register!r} is not a quantum register", pos)
                    return
                for e in t.indices:
                    self.expect(e, VarType.INT, pos, f"index into {t.register}")
                dim *= self.layout.dim_of(elements[:1]) ** len(t.indices)
            else:
                fixed.append(t)
        if fixed:
            d = self.qvars(fixed, pos)
            if d is None:
                return
            dim *= d
        if selector is not None:
            self.expect(selector, VarType.INT, pos, f"selector of {name}")
            if not self.table.is_family(name):
                self.error(f"{name!r} is not a parametrised family", pos)
                return
            if self.table.family_range(name) is None and not isinstance(selector, Const):
                self.error(f"builtin family {name!r} needs a constant selector", pos)
                return
        index = selector.value if isinstance(selector, Const) else None
        if isinstance(index, bool):
            return
        rng = self.table.family_range(name)
        if index is not None and rng is not None and not rng[0] <= index <= rng[1]:
            od = self.operator_dim(name, None, pos)
        else:
            od = self.operator_dim(name, index, pos)
        if od is not None and od != dim:
            self.error(f"{name} has dimension {od}, the selected variables have {dim}", pos)


def typecheck(program: SourceProgram, table: OperatorTable | None = None) -> TypecheckReport:
    """All diagnostics for *program* plus var/change/qv of its body."""
    checker = _Checker(program, table or OperatorTable.for_program(program))
    checker.run()
    body = program.body
    report = TypecheckReport(
        diagnostics=checker.diagnostics,
        var=classical_vars(body),
        change=changed_vars(body),
        qv=quantum_vars(body, program.registers),
        operator_dims=checker.dims,
    )
    logger.debug("typecheck %s: %d diagnostics", program.name, len(report.diagnostics))
    return report


def require_well_typed(
    program: SourceProgram, table: OperatorTable | None = None
) -> TypecheckReport:
    report = typecheck(program, table)
    if not report.ok:
        raise TypecheckError(report.diagnostics)
    return report
