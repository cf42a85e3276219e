"""Recursive-descent parser for cq-programs.

Classical and operator expressions are parsed by precedence climbing over the binding-power
tables in :mod:`cq_hoare.classical`.  Constants are folded while parsing, so the resulting
AST never mentions a ``const`` name.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping
from fractions import Fraction

from cq_hoare.classical import (
    BINARY_PRECEDENCE,
    FUNCTIONS,
    PREFIX_PRECEDENCE,
    Binary,
    Call,
    ClassicalState,
    Const,
    EvaluationError,
    Expr,
    Member,
    Quant,
    Unary,
    Var,
    VarType,
    eval_expr,
    free_vars,
)
from cq_hoare.lang.lexer import ParseError, Token, tokenize
from cq_hoare.lang.syntax import (
    COMPUTATIONAL,
    Abort,
    Assign,
    ConstDecl,
    DistExpr,
    If,
    InitQ,
    InitQs,
    Measure,
    MeasureComp,
    MeasurementDecl,
    OBasis,
    OBin,
    OCall,
    OMatrix,
    OName,
    ONeg,
    ONum,
    OpExpr,
    OSet,
    ParamUnitary,
    QItem,
    QVarDecl,
    RandAssign,
    Selected,
    Skip,
    SourceProgram,
    Stmt,
    Unitary,
    UnitaryDecl,
    UnitaryRef,
    VarDecl,
    While,
    seq,
)

logger = logging.getLogger(__name__)

_OP_PRECEDENCE = {"+": (10, 11), "-": (10, 11), "*": (20, 21), "/": (20, 21)}
_OP_PREFIX = 30
_MEMBER_BP = 50
_STMT_END = {"end", "else"}


class Parser:
    """Token-stream parser; also used directly for assertion and state files."""

    def __init__(
        self,
        text: str,
        consts: Mapping[str, int] | None = None,
        registers: Mapping[str, tuple[str, ...]] | None = None,
        cvars: set[str] | None = None,
        measurements: set[str] | None = None,
    ) -> None:
        self.tokens = tokenize(text)
        self.i = 0
        self.consts: dict[str, int] = dict(consts or {})
        self.registers: dict[str, tuple[str, ...]] = dict(registers or {})
        self.cvars: set[str] = set(cvars or ())
        self.measurements: set[str] = set(measurements or ())
        self.declared: set[str] = set(self.consts) | set(self.registers) | self.cvars

    # ── token helpers ────────────────────────────────────────────────

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.i + offset, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.peek()
        self.i += 1
        return tok

    def at(self, text: str, offset: int = 0) -> bool:
        tok = self.peek(offset)
        return tok.kind in ("op", "kw") and tok.text == text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        tok = self.peek()
        if not self.at(text):
            raise self.error(f"expected {text!r}, found {tok.text or 'end of input'!r}", tok)
        return self.next()

    def ident(self) -> Token:
        tok = self.peek()
        if tok.kind != "id":
            raise self.error(f"expected an identifier, found {tok.text or 'end of input'!r}", tok)
        return self.next()

    def at_eof(self) -> bool:
        return self.peek().kind == "eof"

    def error(self, message: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.peek()
        return ParseError(message, tok.line, tok.col)

    # ── classical expressions ────────────────────────────────────────

    def expr(self, min_bp: int = 0) -> Expr:
        lhs = self._prefix()
        while True:
            tok = self.peek()
            op = tok.text if tok.kind in ("op", "kw") else None
            if op == "in":
                if _MEMBER_BP < min_bp:
                    break
                self.next()
                lhs = Member(lhs, self._expr_set())
                continue
            if op not in BINARY_PRECEDENCE:
                break
            lbp, rbp = BINARY_PRECEDENCE[op]
            if lbp < min_bp:
                break
            self.next()
            lhs = Binary(op, lhs, self.expr(rbp))
        return lhs

    def _prefix(self) -> Expr:
        tok = self.next()
        if tok.kind == "num":
            if not tok.text.isdigit():
                raise self.error(f"expected an integer, found {tok.text!r}", tok)
            return Const(int(tok.text))
        if tok.kind == "kw" and tok.text in ("true", "false"):
            return Const(tok.text == "true")
        if tok.kind in ("op", "kw") and tok.text in PREFIX_PRECEDENCE:
            return Unary(tok.text, self.expr(PREFIX_PRECEDENCE[tok.text]))
        if tok.kind == "kw" and tok.text in ("exists", "forall"):
            var = self.ident().text
            self.expect("in")
            lo = self.expr(_MEMBER_BP + 1)
            self.expect("..")
            hi = self.expr(_MEMBER_BP + 1)
            self.expect(".")
            return Quant(tok.text, var, lo, hi, self.expr(0))
        if tok.kind == "op" and tok.text == "(":
            inner = self.expr(0)
            self.expect(")")
            return inner
        if tok.kind == "id":
            if self.at("("):
                if tok.text not in FUNCTIONS:
                    raise self.error(f"unknown function {tok.text!r}", tok)
                self.next()
                args = [self.expr(0)]
                while self.accept(","):
                    args.append(self.expr(0))
                self.expect(")")
                return Call(tok.text, tuple(args))
            if tok.text in self.consts:
                return Const(self.consts[tok.text])
            return Var(tok.text)
        raise self.error(f"unexpected {tok.text or 'end of input'!r} in expression", tok)

    def _expr_set(self) -> tuple[Expr, ...]:
        self.expect("{")
        items: list[Expr] = []
        if not self.at("}"):
            items.append(self.expr(0))
            while self.accept(","):
                items.append(self.expr(0))
        self.expect("}")
        return tuple(items)

    def const_int(self) -> int:
        """An integer expression evaluated now (constants only)."""
        tok = self.peek()
        e = self.expr(_MEMBER_BP + 1)
        if free_vars(e):
            raise self.error(f"expected a constant, found variables {sorted(free_vars(e))}", tok)
        try:
            value = eval_expr(e, ClassicalState())
        except EvaluationError as exc:
            raise self.error(str(exc), tok) from None
        if isinstance(value, bool):
            raise self.error("expected an integer constant", tok)
        return value

    # ── operator expressions ─────────────────────────────────────────

    def opexpr(self, min_bp: int = 0) -> OpExpr:
        lhs = self._op_prefix()
        while True:
            tok = self.peek()
            if tok.kind != "op" or tok.text not in _OP_PRECEDENCE:
                break
            lbp, rbp = _OP_PRECEDENCE[tok.text]
            if lbp < min_bp:
                break
            self.next()
            lhs = OBin(tok.text, lhs, self.opexpr(rbp))
        return lhs

    def _op_prefix(self) -> OpExpr:
        tok = self.next()
        if tok.kind == "num":
            text = tok.text
            if text.endswith("i"):
                return ONum(complex(0, float(text[:-1])))
            return ONum(complex(float(text)) if not text.isdigit() else complex(int(text)))
        if tok.kind == "op" and tok.text == "-":
            return ONeg(self.opexpr(_OP_PREFIX))
        if tok.kind == "op" and tok.text == "(":
            inner = self.opexpr(0)
            self.expect(")")
            return inner
        if tok.kind == "op" and tok.text == "[":
            rows = []
            while True:
                self.expect("[")
                row = [self.opexpr(0)]
                while self.accept(","):
                    row.append(self.opexpr(0))
                self.expect("]")
                rows.append(tuple(row))
                if not self.accept(","):
                    break
            self.expect("]")
            return OMatrix(tuple(rows))
        if tok.kind == "op" and tok.text == "{":
            items = [self.opexpr(0)]
            while self.accept(","):
                items.append(self.opexpr(0))
            self.expect("}")
            return OSet(tuple(items))
        if tok.kind == "id":
            if self.accept("("):
                basis = tok.text in ("ket", "proj")
                args: list[OpExpr] = []
                if not self.at(")"):
                    args.append(self._basis_part() if basis else self.opexpr(0))
                    while self.accept(","):
                        args.append(self._basis_part() if basis else self.opexpr(0))
                self.expect(")")
                return OCall(tok.text, tuple(args))
            if tok.text in self.consts:
                return ONum(complex(self.consts[tok.text]))
            return OName(tok.text)
        raise self.error(f"unexpected {tok.text or 'end of input'!r} in operator expression", tok)

    def _basis_part(self) -> OpExpr:
        if self.at("+") or (self.at("-") and (self.at(",", 1) or self.at(")", 1))):
            return OBasis(None, None, self.next().text)
        index = self.opexpr(0)
        dim = self.opexpr(0) if self.accept(":") else None
        return OBasis(index, dim)

    # ── quantum registers ────────────────────────────────────────────

    def qitem(self) -> list[QItem]:
        tok = self.ident()
        name = tok.text
        if not self.accept("["):
            return list(self.registers.get(name, (name,)))
        if name not in self.registers:
            raise self.error(f"{name!r} is not a quantum register", tok)
        indices = [self.expr(0)]
        while self.accept(","):
            indices.append(self.expr(0))
        self.expect("]")
        if any(free_vars(e) for e in indices):
            return [Selected(name, tuple(indices))]
        elements = self.registers[name]
        out: list[QItem] = []
        for e in indices:
            k = eval_expr(e, ClassicalState())
            if isinstance(k, bool) or not 1 <= k <= len(elements):
                raise self.error(f"index {k} outside 1..{len(elements)} of register {name!r}", tok)
            out.append(elements[k - 1])
        return out

    def qreg(self) -> list[QItem]:
        items = self.qitem()
        while self.accept(","):
            items.extend(self.qitem())
        return items

    def plain_qreg(self, what: str) -> tuple[str, ...]:
        tok = self.peek()
        items = self.qreg()
        if any(isinstance(x, Selected) for x in items):
            raise self.error(f"run-time register indices are not allowed in {what}", tok)
        return tuple(items)  # type: ignore[arg-type]

    # ── statements ───────────────────────────────────────────────────

    def stmts(self) -> Stmt:
        parts = [self.stmt()]
        while self.accept(";"):
            if (self.peek().kind == "kw" and self.peek().text in _STMT_END) or self.at_eof():
                break
            parts.append(self.stmt())
        return seq(*parts)

    def stmt(self) -> Stmt:
        tok = self.peek()
        pos = tok.pos
        if self.accept("skip"):
            return Skip(pos)
        if self.accept("abort"):
            return Abort(pos)
        if self.accept("if"):
            cond = self.expr(0)
            self.expect("then")
            then = self.stmts()
            orelse = self.stmts() if self.accept("else") else Skip()
            self.expect("end")
            return If(cond, then, orelse, pos)
        if self.accept("while"):
            cond = self.expr(0)
            self.expect("do")
            body = self.stmts()
            self.expect("end")
            return While(cond, body, pos)
        if tok.kind != "id":
            raise self.error(f"expected a statement, found {tok.text or 'end of input'!r}", tok)
        if tok.text in self.cvars and (self.at(":=", 1) or self.at(":=$", 1)):
            return self._classical_stmt(pos)
        items = self.qreg()
        if self.accept(":="):
            zero = self.next()
            if zero.text != "0":
                raise self.error("quantum variables can only be assigned 0", zero)
            if any(isinstance(x, Selected) for x in items):
                raise self.error("run-time register indices are not allowed in initialisation", tok)
            if len(items) == 1:
                return InitQ(items[0], pos)  # type: ignore[arg-type]
            return InitQs(tuple(items), pos)  # type: ignore[arg-type]
        self.expect("*=")
        name = self.ident().text
        selector = None
        if self.accept("("):
            selector = self.expr(0)
            self.expect(")")
        if selector is None and all(isinstance(x, str) for x in items):
            return Unitary(tuple(items), UnitaryRef(name), pos)  # type: ignore[arg-type]
        return ParamUnitary(tuple(items), name, selector, pos)

    def _classical_stmt(self, pos: tuple[int, int]) -> Stmt:
        target = self.next().text
        if self.accept(":=$"):
            return RandAssign(target, self.dist(), pos)
        self.expect(":=")
        if self.accept("measure"):
            if self.peek().kind == "id" and self.peek().text in self.measurements:
                name = self.next().text
                bracketed = self.accept("[")
                qvars = self.plain_qreg("measurements")
                if bracketed:
                    self.expect("]")
                return Measure(target, name, qvars, pos)
            return MeasureComp(target, self.plain_qreg("measurements"), pos)
        return Assign(target, self.expr(0), pos)

    def dist(self) -> DistExpr:
        if self.accept("unif"):
            self.expect("(")
            lo = self.expr(0)
            self.expect(",")
            hi = self.expr(0)
            self.expect(")")
            return DistExpr("unif", (lo, hi))
        if self.accept("point"):
            self.expect("(")
            e = self.expr(0)
            self.expect(")")
            return DistExpr("point", (e,))
        self.expect("{")
        values: list[Expr] = []
        probs: list[float] = []
        while True:
            values.append(self._literal_value())
            self.expect(":")
            probs.append(self.probability())
            if not self.accept(","):
                break
        self.expect("}")
        return DistExpr("explicit", tuple(values), tuple(probs))

    def _literal_value(self) -> Expr:
        tok = self.peek()
        e = self.expr(_MEMBER_BP + 1)
        if free_vars(e):
            raise self.error("distribution values must be constants", tok)
        return Const(eval_expr(e, ClassicalState()))

    def probability(self) -> float:
        tok = self.next()
        if tok.kind != "num" or tok.text.endswith("i"):
            raise self.error(f"expected a probability, found {tok.text!r}", tok)
        value = Fraction(tok.text) if "e" not in tok.text.lower() else Fraction(float(tok.text))
        if self.accept("/"):
            den = self.next()
            if den.kind != "num" or not den.text.isdigit() or int(den.text) == 0:
                raise self.error(f"expected a positive denominator, found {den.text!r}", den)
            value /= int(den.text)
        return float(value)

    # ── declarations and programs ────────────────────────────────────

    def _declare(self, tok: Token) -> str:
        if tok.text in self.declared:
            raise self.error(f"duplicate declaration of {tok.text!r}", tok)
        self.declared.add(tok.text)
        return tok.text

    def program(self) -> SourceProgram:
        self.expect("program")
        name = self.ident().text
        qvars: list[QVarDecl] = []
        cvars: list[VarDecl] = []
        consts: list[ConstDecl] = []
        unitaries: list[UnitaryDecl] = []
        measurements: list[MeasurementDecl] = []
        while not self.at("body"):
            tok = self.peek()
            if self.accept("qvar"):
                qvars.extend(self._qvar_decl())
            elif self.accept("var"):
                cvars.extend(self._var_decl())
            elif self.accept("const"):
                cname = self._declare(self.ident())
                self.expect("=")
                value = self.const_int()
                self.consts[cname] = value
                consts.append(ConstDecl(cname, value, tok.pos))
            elif self.accept("unitary"):
                unitaries.append(self._unitary_decl(tok))
            elif self.accept("measurement"):
                mname = self._declare(self.ident())
                self.expect("=")
                self.expect("{")
                ops = [self.opexpr(0)]
                while self.accept(","):
                    ops.append(self.opexpr(0))
                self.expect("}")
                self.measurements.add(mname)
                measurements.append(MeasurementDecl(mname, tuple(ops), tok.pos))
            else:
                raise self.error(f"expected a declaration or 'body', found {tok.text!r}", tok)
        self.expect("body")
        body = self.stmts()
        self.expect("end")
        if not self.at_eof():
            raise self.error(f"unexpected {self.peek().text!r} after end of program")
        logger.debug(
            "parsed program %s: %d qvars, %d vars, %d unitaries",
            name, len(qvars), len(cvars), len(unitaries),
        )
        return SourceProgram(
            name, tuple(qvars), tuple(cvars), tuple(consts), tuple(unitaries),
            tuple(measurements), body,
        )

    def _qvar_decl(self) -> list[QVarDecl]:
        entries: list[tuple[Token, int | None]] = []
        while True:
            tok = self.ident()
            size = None
            if self.accept("["):
                size = self.const_int()
                if size < 1:
                    raise self.error(f"register {tok.text!r} must have at least one element", tok)
                self.expect("]")
            entries.append((tok, size))
            if not self.accept(","):
                break
        self.expect(":")
        self.expect("qudit")
        self.expect("(")
        dim_tok = self.peek()
        dim = self.const_int()
        if dim < 2:
            raise self.error(f"qudit dimension must be at least 2, got {dim}", dim_tok)
        self.expect(")")
        out = []
        for tok, size in entries:
            decl = QVarDecl(self._declare(tok), dim, size, tok.pos)
            if size is not None:
                self.registers[decl.name] = decl.elements
            out.append(decl)
        return out

    def _var_decl(self) -> list[VarDecl]:
        toks = [self.ident()]
        while self.accept(","):
            toks.append(self.ident())
        self.expect(":")
        lo = hi = None
        if self.accept("bool"):
            vtype = VarType.BOOL
        else:
            self.expect("int")
            vtype = VarType.INT
            if self.accept("range"):
                rtok = self.peek()
                lo = self.const_int()
                self.expect("..")
                hi = self.const_int()
                if hi < lo:
                    raise self.error(f"empty range {lo}..{hi}", rtok)
        out = []
        for tok in toks:
            out.append(VarDecl(self._declare(tok), vtype, lo, hi, tok.pos))
            self.cvars.add(tok.text)
        return out

    def _unitary_decl(self, start: Token) -> UnitaryDecl:
        name = self._declare(self.ident())
        param = lo = hi = None
        if self.accept("("):
            param = self.ident().text
            self.expect(":")
            rtok = self.peek()
            lo = self.const_int()
            self.expect("..")
            hi = self.const_int()
            if hi < lo:
                raise self.error(f"empty family range {lo}..{hi}", rtok)
            self.expect(")")
        self.expect("=")
        expr = self.opexpr(0)
        return UnitaryDecl(name, expr, param, lo, hi, start.pos)


def parse(text: str) -> SourceProgram:
    """Parse a complete ``program ... body ... end`` source text."""
    return Parser(text).program()


def parse_expr(text: str, consts: Mapping[str, int] | None = None) -> Expr:
    p = Parser(text, consts)
    e = p.expr(0)
    if not p.at_eof():
        raise p.error(f"unexpected {p.peek().text!r} after expression")
    return e


def parse_opexpr(text: str, consts: Mapping[str, int] | None = None) -> OpExpr:
    p = Parser(text, consts)
    e = p.opexpr(0)
    if not p.at_eof():
        raise p.error(f"unexpected {p.peek().text!r} after operator expression")
    return e


def parse_stmt(text: str, program: SourceProgram) -> Stmt:
    """Parse a statement in the declaration context of *program*."""
    p = Parser(
        text,
        consts=program.constants,
        registers=program.registers,
        cvars=set(program.types),
        measurements={m.name for m in program.measurements},
    )
    s = p.stmts()
    if not p.at_eof():
        raise p.error(f"unexpected {p.peek().text!r} after statement")
    return s


__all__ = ["COMPUTATIONAL", "Parser", "parse", "parse_expr", "parse_opexpr", "parse_stmt"]
