"""Abstract syntax of cq-programs: statements, operator expressions and declarations."""

from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass, field
from typing import Union

from cq_hoare.classical import Const, Expr, VarType
from cq_hoare.linalg import QuantumLayout

Pos = tuple[int, int]

# Name of the measurement in the computational basis of its targets.
COMPUTATIONAL = "<computational>"


# ──────────────────────────── Operator expressions ────────────────────────────


class OpExpr:
    """Expression denoting a scalar, vector, matrix or basis permutation."""

    __slots__ = ()


@dataclass(frozen=True)
class ONum(OpExpr):
    value: complex


@dataclass(frozen=True)
class OName(OpExpr):
    name: str


@dataclass(frozen=True)
class OCall(OpExpr):
    func: str
    args: tuple[OpExpr, ...]


@dataclass(frozen=True)
class OBin(OpExpr):
    op: str  # + - * /
    left: OpExpr
    right: OpExpr


@dataclass(frozen=True)
class ONeg(OpExpr):
    arg: OpExpr


@dataclass(frozen=True)
class OMatrix(OpExpr):
    rows: tuple[tuple[OpExpr, ...], ...]


@dataclass(frozen=True)
class OSet(OpExpr):
    """``{a, b, ...}`` argument (oracle marked set)."""

    items: tuple[OpExpr, ...]


@dataclass(frozen=True)
class OBasis(OpExpr):
    """Ket component ``k`` or ``k:d``; ``sign`` marks the ``+``/``-`` qubit states."""

    index: OpExpr | None
    dim: OpExpr | None = None
    sign: str = ""


# ──────────────────────────── Statements ──────────────────────────────────────


class Stmt:
    __slots__ = ()


@dataclass(frozen=True)
class Skip(Stmt):
    pos: Pos | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Abort(Stmt):
    pos: Pos | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Assign(Stmt):
    target: str
    expr: Expr
    pos: Pos | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class DistExpr:
    """Distribution as written: ``unif(lo, hi)``, ``point(e)`` or ``{v : p, ...}``."""

    kind: str  # unif | point | explicit
    args: tuple[Expr, ...] = ()
    probs: tuple[float, ...] = ()


@dataclass(frozen=True)
class RandAssign(Stmt):
    target: str
    dist: DistExpr
    pos: Pos | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Measure(Stmt):
    """``x := measure M[q̄]``; outcome i of *measurement* is stored as the integer i."""

    target: str
    measurement: str
    qvars: tuple[str, ...]
    pos: Pos | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class InitQ(Stmt):
    qvar: str
    pos: Pos | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class UnitaryRef:
    """A named unitary, or member *index* of a parametrised family."""

    name: str
    index: int | None = None

    def __str__(self) -> str:
        return self.name if self.index is None else f"{self.name}({self.index})"


@dataclass(frozen=True)
class Unitary(Stmt):
    qvars: tuple[str, ...]
    ref: UnitaryRef
    pos: Pos | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Seq(Stmt):
    stmts: tuple[Stmt, ...]
    pos: Pos | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class If(Stmt):
    cond: Expr
    then: Stmt
    orelse: Stmt
    pos: Pos | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class While(Stmt):
    cond: Expr
    body: Stmt
    pos: Pos | None = field(default=None, compare=False, repr=False)


# ── Sugar ────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class InitQs(Stmt):
    """``q̄ := 0`` on several variables."""

    qvars: tuple[str, ...]
    pos: Pos | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class MeasureComp(Stmt):
    """``x := measure q̄`` in the computational basis."""

    target: str
    qvars: tuple[str, ...]
    pos: Pos | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Selected:
    """``q[e1, ..., ek]``: register elements chosen by run-time indices (1-based)."""

    register: str
    indices: tuple[Expr, ...]


QItem = Union[str, Selected]


@dataclass(frozen=True)
class ParamUnitary(Stmt):
    """``q̄ *= U`` or ``q̄ *= U(e)`` where q̄ selects variables or U is a family."""

    targets: tuple[QItem, ...]
    name: str
    selector: Expr | None = None
    pos: Pos | None = field(default=None, compare=False, repr=False)


SUGAR_NODES = (InitQs, MeasureComp, ParamUnitary)


def seq(*stmts: Stmt) -> Stmt:
    """Flattened sequence; ``skip`` for no statements, the statement itself for one."""
    flat: list[Stmt] = []
    for s in stmts:
        if isinstance(s, Seq):
            flat.extend(s.stmts)
        else:
            flat.append(s)
    if not flat:
        return Skip()
    if len(flat) == 1:
        return flat[0]
    return Seq(tuple(flat))


def children(s: Stmt) -> tuple[Stmt, ...]:
    if isinstance(s, Seq):
        return s.stmts
    if isinstance(s, If):
        return (s.then, s.orelse)
    if isinstance(s, While):
        return (s.body,)
    return ()


def walk(s: Stmt) -> Iterator[Stmt]:
    """Pre-order traversal of every statement node."""
    yield s
    for c in children(s):
        yield from walk(c)


# ──────────────────────────── Declarations ────────────────────────────────────


@dataclass(frozen=True)
class QVarDecl:
    """A qudit, or with *size* a register whose elements are ``name[1] .. name[size]``."""

    name: str
    dim: int
    size: int | None = None
    pos: Pos | None = field(default=None, compare=False, repr=False)

    @property
    def elements(self) -> tuple[str, ...]:
        if self.size is None:
            return (self.name,)
        return tuple(f"{self.name}[{i}]" for i in range(1, self.size + 1))


@dataclass(frozen=True)
class VarDecl:
    name: str
    type: VarType
    lo: int | None = None
    hi: int | None = None
    pos: Pos | None = field(default=None, compare=False, repr=False)

    @property
    def values(self) -> tuple[int | bool, ...] | None:
        if self.type is VarType.BOOL:
            return (False, True)
        if self.lo is None or self.hi is None:
            return None
        return tuple(range(self.lo, self.hi + 1))


@dataclass(frozen=True)
class ConstDecl:
    name: str
    value: int
    pos: Pos | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class UnitaryDecl:
    """``unitary NAME = op`` or the family ``unitary NAME(k : lo..hi) = op``."""

    name: str
    expr: OpExpr
    param: str | None = None
    lo: int | None = None
    hi: int | None = None
    pos: Pos | None = field(default=None, compare=False, repr=False)

    @property
    def is_family(self) -> bool:
        return self.param is not None


@dataclass(frozen=True)
class MeasurementDecl:
    name: str
    operators: tuple[OpExpr, ...]
    pos: Pos | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class SourceProgram:
    """A parsed program: declarations plus body."""

    name: str
    qvars: tuple[QVarDecl, ...] = ()
    cvars: tuple[VarDecl, ...] = ()
    consts: tuple[ConstDecl, ...] = ()
    unitaries: tuple[UnitaryDecl, ...] = ()
    measurements: tuple[MeasurementDecl, ...] = ()
    body: Stmt = field(default_factory=Skip)

    @property
    def layout(self) -> QuantumLayout:
        return QuantumLayout(tuple((e, q.dim) for q in self.qvars for e in q.elements))

    @property
    def registers(self) -> dict[str, tuple[str, ...]]:
        return {q.name: q.elements for q in self.qvars if q.size is not None}

    @property
    def types(self) -> dict[str, VarType]:
        return {v.name: v.type for v in self.cvars}

    @property
    def constants(self) -> dict[str, int]:
        return {c.name: c.value for c in self.consts}

    def unitary(self, name: str) -> UnitaryDecl | None:
        return next((u for u in self.unitaries if u.name == name), None)

    def measurement(self, name: str) -> MeasurementDecl | None:
        return next((m for m in self.measurements if m.name == name), None)

    def with_body(self, body: Stmt) -> SourceProgram:
        return SourceProgram(
            self.name, self.qvars, self.cvars, self.consts, self.unitaries, self.measurements, body
        )


def const_value(e: Expr) -> int | bool | None:
    return e.value if isinstance(e, Const) else None
