"""Pretty-printer producing source text that parses back to the same AST."""

from __future__ import annotations

from cq_hoare.classical import format_expr
from cq_hoare.lang.syntax import (
    COMPUTATIONAL,
    Abort,
    Assign,
    DistExpr,
    If,
    InitQ,
    InitQs,
    Measure,
    MeasureComp,
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
    RandAssign,
    Selected,
    Seq,
    Skip,
    SourceProgram,
    Stmt,
    Unitary,
    While,
)

_INDENT = "  "
_OP_POWER = {"+": (10, 11), "-": (10, 11), "*": (20, 21), "/": (20, 21)}


def _number(value: complex) -> str:
    value = complex(value)
    re, im = value.real, value.imag
    if im == 0:
        return str(int(re)) if re.is_integer() and re >= 0 else repr(re)
    if re == 0:
        return f"{int(im)}i" if im.is_integer() and im >= 0 else f"{im!r}i"
    return f"({_number(complex(re))} + {_number(complex(0, im))})"


def format_op(node: OpExpr, parent: int = 0) -> str:
    match node:
        case ONum(value):
            text = _number(value)
            negative = complex(value).real < 0 or complex(value).imag < 0
            return f"({text})" if negative and parent > 0 else text
        case OName(name):
            return name
        case ONeg(arg):
            text = f"-{format_op(arg, 30)}"
            return f"({text})" if 30 < parent else text
        case OBin(op, left, right):
            lbp, rbp = _OP_POWER[op]
            text = f"{format_op(left, lbp)} {op} {format_op(right, rbp)}"
            return f"({text})" if lbp < parent else text
        case OMatrix(rows):
            return "[" + ", ".join(
                "[" + ", ".join(format_op(c) for c in row) + "]" for row in rows
            ) + "]"
        case OSet(items):
            return "{" + ", ".join(format_op(i) for i in items) + "}"
        case OBasis(index, dim, sign):
            if sign:
                return sign
            return format_op(index) + (f":{format_op(dim)}" if dim is not None else "")
        case OCall(func, args):
            return f"{func}(" + ", ".join(format_op(a) for a in args) + ")"
    raise TypeError(f"not an operator expression: {node!r}")


def format_qitem(item: QItem) -> str:
    if isinstance(item, Selected):
        return f"{item.register}[" + ", ".join(format_expr(e) for e in item.indices) + "]"
    return item


def format_qreg(items) -> str:
    return ", ".join(format_qitem(i) for i in items)


def format_dist(d: DistExpr) -> str:
    if d.kind == "unif":
        return f"unif({format_expr(d.args[0])}, {format_expr(d.args[1])})"
    if d.kind == "point":
        return f"point({format_expr(d.args[0])})"
    return "{" + ", ".join(f"{format_expr(v)} : {p!r}" for v, p in zip(d.args, d.probs)) + "}"


def _lines(s: Stmt, depth: int) -> list[str]:
    pad = _INDENT * depth
    match s:
        case Skip():
            return [pad + "skip"]
        case Abort():
            return [pad + "abort"]
        case Assign(target, expr):
            return [f"{pad}{target} := {format_expr(expr)}"]
        case RandAssign(target, dist):
            return [f"{pad}{target} :=$ {format_dist(dist)}"]
        case Measure(target, measurement, qvars):
            if measurement == COMPUTATIONAL:
                return [f"{pad}{target} := measure {format_qreg(qvars)}"]
            return [f"{pad}{target} := measure {measurement} {format_qreg(qvars)}"]
        case MeasureComp(target, qvars):
            return [f"{pad}{target} := measure {format_qreg(qvars)}"]
        case InitQ(qvar):
            return [f"{pad}{qvar} := 0"]
        case InitQs(qvars):
            return [f"{pad}{format_qreg(qvars)} := 0"]
        case Unitary(qvars, ref):
            return [f"{pad}{format_qreg(qvars)} *= {ref}"]
        case ParamUnitary(targets, name, selector):
            sel = f"({format_expr(selector)})" if selector is not None else ""
            return [f"{pad}{format_qreg(targets)} *= {name}{sel}"]
        case Seq(stmts):
            out: list[str] = []
            for i, part in enumerate(stmts):
                block = _lines(part, depth)
                if i < len(stmts) - 1:
                    block[-1] += ";"
                out.extend(block)
            return out
        case If(cond, then, orelse):
            out = [f"{pad}if {format_expr(cond)} then", *_lines(then, depth + 1)]
            if not isinstance(orelse, Skip):
                out += [pad + "else", *_lines(orelse, depth + 1)]
            return out + [pad + "end"]
        case While(cond, body):
            return [f"{pad}while {format_expr(cond)} do", *_lines(body, depth + 1), pad + "end"]
    raise TypeError(f"not a statement: {s!r}")


def format_stmt(s: Stmt, depth: int = 0) -> str:
    return "\n".join(_lines(s, depth))


def format_program(program: SourceProgram) -> str:
    """Source text of *program*; constants are printed as declarations, uses stay inlined."""
    out = [f"program {program.name}"]
    for c in program.consts:
        out.append(f"{_INDENT}const {c.name} = {c.value}")
    for q in program.qvars:
        size = f"[{q.size}]" if q.size is not None else ""
        out.append(f"{_INDENT}qvar {q.name}{size} : qudit({q.dim})")
    for v in program.cvars:
        rng = f" range {v.lo}..{v.hi}" if v.lo is not None else ""
        out.append(f"{_INDENT}var {v.name} : {v.type.value}{rng}")
    for u in program.unitaries:
        family = f"({u.param} : {u.lo}..{u.hi})" if u.is_family else ""
        out.append(f"{_INDENT}unitary {u.name}{family} = {format_op(u.expr)}")
    for m in program.measurements:
        ops = ", ".join(format_op(e) for e in m.operators)
        out.append(f"{_INDENT}measurement {m.name} = {{{ops}}}")
    out.append("body")
    out.extend(_lines(program.body, 1))
    out.append("end")
    return "\n".join(out) + "\n"
