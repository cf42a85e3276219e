"""Classical values, states, expressions, predicates and finite distributions."""

from __future__ import annotations

import itertools
import logging
import math
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Union

logger = logging.getLogger(__name__)

Value = Union[bool, int]

DIST_TOL = 1e-12


class EvaluationError(ValueError):
    """Unbound variable, division by zero or ill-typed operand."""


class DistributionError(ValueError):
    """Malformed finite distribution."""


class VarType(str, Enum):
    """Declared type of a classical variable."""

    INT = "int"
    BOOL = "bool"


def type_of_value(v: Value) -> VarType:
    return VarType.BOOL if isinstance(v, bool) else VarType.INT


def format_value(v: Value) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


# ──────────────────────────── States ──────────────────────────────────────────


@dataclass(frozen=True)
class ClassicalState:
    """A point σ: finite map from variable names to values (kept sorted by name)."""

    items: tuple[tuple[str, Value], ...] = ()

    @classmethod
    def of(cls, mapping: Mapping[str, Value] | None = None, **kwargs: Value) -> ClassicalState:
        merged = dict(mapping or {}, **kwargs)
        return cls(tuple(sorted(merged.items())))

    def __getitem__(self, name: str) -> Value:
        for key, value in self.items:
            if key == name:
                return value
        raise EvaluationError(f"variable {name!r} is unbound")

    def __contains__(self, name: object) -> bool:
        return any(key == name for key, _ in self.items)

    def __iter__(self) -> Iterator[str]:
        return (key for key, _ in self.items)

    def get(self, name: str, default: Value | None = None) -> Value | None:
        return self[name] if name in self else default

    def as_dict(self) -> dict[str, Value]:
        return dict(self.items)

    def sort_key(self) -> tuple:
        return tuple((k, isinstance(v, bool), int(v)) for k, v in self.items)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ClassicalState):
            return NotImplemented
        return self.sort_key() == other.sort_key()

    def __hash__(self) -> int:
        return hash(self.sort_key())

    def __str__(self) -> str:
        return "{" + ", ".join(f"{k}={format_value(v)}" for k, v in self.items) + "}"


def update(
    sigma: ClassicalState,
    name: str,
    value: Value,
    types: Mapping[str, VarType] | None = None,
) -> ClassicalState:
    """``σ[x ↦ v]``; with *types* the value must match the declared type of *name*."""
    if types is not None and name in types and type_of_value(value) != types[name]:
        raise EvaluationError(
            f"cannot assign {format_value(value)} to {types[name].value} variable {name!r}"
        )
    merged = sigma.as_dict()
    merged[name] = value
    return ClassicalState(tuple(sorted(merged.items())))


def product_states(domains: Mapping[str, Sequence[Value]]) -> list[ClassicalState]:
    """Cartesian product of per-variable value lists, in a deterministic order."""
    names = sorted(domains)
    return [
        ClassicalState(tuple(zip(names, combo)))
        for combo in itertools.product(*(domains[n] for n in names))
    ]


# ──────────────────────────── Expressions ─────────────────────────────────────


class Expr:
    """Base class of classical expressions and predicates."""

    __slots__ = ()

    def __str__(self) -> str:
        return format_expr(self)


@dataclass(frozen=True)
class Const(Expr):
    value: Value


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Unary(Expr):
    op: str  # "-" | "not"
    arg: Expr


@dataclass(frozen=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call(Expr):
    func: str
    args: tuple[Expr, ...]


@dataclass(frozen=True)
class Member(Expr):
    elem: Expr
    values: tuple[Expr, ...]


@dataclass(frozen=True)
class Quant(Expr):
    """Bounded quantifier ``exists|forall var in lo..hi . body``."""

    kind: str
    var: str
    lo: Expr
    hi: Expr
    body: Expr


TRUE = Const(True)
FALSE = Const(False)

# Binding powers (left, right); shared with the parser and the printer.
BINARY_PRECEDENCE: dict[str, tuple[int, int]] = {
    "=>": (11, 10),
    "or": (20, 21),
    "and": (30, 31),
    "=": (50, 51),
    "!=": (50, 51),
    "<": (50, 51),
    "<=": (50, 51),
    ">": (50, 51),
    ">=": (50, 51),
    "+": (60, 61),
    "-": (60, 61),
    "*": (70, 71),
    "div": (70, 71),
    "mod": (70, 71),
    "^": (91, 90),
}
PREFIX_PRECEDENCE: dict[str, int] = {"not": 40, "-": 80}

ARITH_OPS = {"+", "-", "*", "div", "mod", "^"}
COMPARE_OPS = {"=", "!=", "<", "<=", ">", ">="}
BOOL_OPS = {"and", "or", "=>"}
FUNCTIONS: dict[str, int] = {
    "gcd": 2,
    "powmod": 3,
    "abs": 1,
    "min": 2,
    "max": 2,
    "contfrac": 3,
}


def conj(*ps: Expr) -> Expr:
    """Left-nested conjunction; ``true`` for no operands."""
    ps = tuple(p for p in ps if p != TRUE)
    if not ps:
        return TRUE
    out = ps[0]
    for p in ps[1:]:
        out = Binary("and", out, p)
    return out


def disj(*ps: Expr) -> Expr:
    ps = tuple(p for p in ps if p != FALSE)
    if not ps:
        return FALSE
    out = ps[0]
    for p in ps[1:]:
        out = Binary("or", out, p)
    return out


def neg(p: Expr) -> Expr:
    return Unary("not", p)


def eq(e: Expr, v: Value | Expr) -> Expr:
    return Binary("=", e, v if isinstance(v, Expr) else Const(v))


# ──────────────────────────── Evaluation ──────────────────────────────────────


def _int(v: Value, what: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise EvaluationError(f"{what} expects an integer, got {format_value(v)}")
    return v


def _bool(v: Value, what: str) -> bool:
    if not isinstance(v, bool):
        raise EvaluationError(f"{what} expects a boolean, got {format_value(v)}")
    return v


def continued_fraction_order(num: int, den: int, modulus: int) -> int:
    """Minimal denominator n < *modulus* of a convergent m/n of num/den within 1/(2·modulus²).

    Returns 0 when no convergent qualifies.
    """
    if den <= 0 or modulus <= 0:
        raise EvaluationError("contfrac needs positive denominator and modulus")
    target = Fraction(num, den)
    bound = Fraction(1, 2 * modulus * modulus)
    h_prev, h = 0, 1
    k_prev, k = 1, 0
    a_num, a_den = num, den
    while a_den:
        a, rem = divmod(a_num, a_den)
        h_prev, h = h, a * h + h_prev
        k_prev, k = k, a * k + k_prev
        if k >= modulus:
            logger.debug(
                "contfrac(%d, %d, %d): convergent denominator %d reached the modulus",
                num, den, modulus, k,
            )
            break
        if abs(Fraction(h, k) - target) < bound:
            return k
        a_num, a_den = a_den, rem
    logger.debug(
        "contfrac(%d, %d, %d): no convergent within the bound, returning 0", num, den, modulus
    )
    return 0


def eval_expr(e: Expr, sigma: ClassicalState) -> Value:
    """Value of *e* at σ."""
    match e:
        case Const(value):
            return value
        case Var(name):
            return sigma[name]
        case Unary("-", arg):
            return -_int(eval_expr(arg, sigma), "negation")
        case Unary("not", arg):
            return not _bool(eval_expr(arg, sigma), "not")
        case Binary("and", left, right):
            return _bool(eval_expr(left, sigma), "and") and _bool(eval_expr(right, sigma), "and")
        case Binary("or", left, right):
            return _bool(eval_expr(left, sigma), "or") or _bool(eval_expr(right, sigma), "or")
        case Binary("=>", left, right):
            return (not _bool(eval_expr(left, sigma), "=>")) or _bool(
                eval_expr(right, sigma), "=>"
            )
        case Binary(op, left, right) if op in COMPARE_OPS:
            a, b = eval_expr(left, sigma), eval_expr(right, sigma)
            if op in ("=", "!="):
                if isinstance(a, bool) != isinstance(b, bool):
                    raise EvaluationError(
                        f"cannot compare {format_value(a)} with {format_value(b)}"
                    )
                return (a == b) if op == "=" else (a != b)
            a, b = _int(a, op), _int(b, op)
            return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[op]
        case Binary(op, left, right) if op in ARITH_OPS:
            a, b = _int(eval_expr(left, sigma), op), _int(eval_expr(right, sigma), op)
            return _arith(op, a, b)
        case Call(func, args):
            vals = [_int(eval_expr(a, sigma), func) for a in args]
            return _call(func, vals)
        case Member(elem, values):
            v = eval_expr(elem, sigma)
            members = [eval_expr(x, sigma) for x in values]
            return any(v == m and type(v) is type(m) for m in members)
        case Quant(kind, var, lo, hi, body):
            lo_v, hi_v = _int(eval_expr(lo, sigma), kind), _int(eval_expr(hi, sigma), kind)
            results = (
                _bool(eval_expr(body, update(sigma, var, d)), kind) for d in range(lo_v, hi_v + 1)
            )
            return any(results) if kind == "exists" else all(results)
    raise EvaluationError(f"cannot evaluate expression {e!r}")


def _arith(op: str, a: int, b: int) -> int:
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op in ("div", "mod"):
        if b == 0:
            raise EvaluationError(f"{op} by zero")
        return a // b if op == "div" else a % b
    if b < 0:
        raise EvaluationError(f"negative exponent {b}")
    return a**b


def _call(func: str, vals: list[int]) -> int:
    if func == "gcd":
        return math.gcd(*vals)
    if func == "powmod":
        base, exp, mod = vals
        if mod == 0:
            raise EvaluationError("powmod with modulus zero")
        if exp < 0:
            raise EvaluationError(f"negative exponent {exp}")
        return pow(base, exp, mod)
    if func == "abs":
        return abs(vals[0])
    if func == "min":
        return min(vals)
    if func == "max":
        return max(vals)
    if func == "contfrac":
        return continued_fraction_order(*vals)
    raise EvaluationError(f"unknown function {func!r}")


def eval_pred(p: Expr, sigma: ClassicalState) -> bool:
    """σ ⊨ p."""
    return _bool(eval_expr(p, sigma), "predicate")


# ──────────────────────────── Syntax utilities ────────────────────────────────


def free_vars(e: Expr) -> frozenset[str]:
    match e:
        case Const():
            return frozenset()
        case Var(name):
            return frozenset({name})
        case Unary(_, arg):
            return free_vars(arg)
        case Binary(_, left, right):
            return free_vars(left) | free_vars(right)
        case Call(_, args):
            return frozenset().union(*(free_vars(a) for a in args))
        case Member(elem, values):
            return free_vars(elem).union(*(free_vars(v) for v in values))
        case Quant(_, var, lo, hi, body):
            return free_vars(lo) | free_vars(hi) | (free_vars(body) - {var})
    raise TypeError(f"not an expression: {e!r}")


def substitute(e: Expr, name: str, replacement: Expr) -> Expr:
    """Capture-avoiding ``e[name/replacement]``."""
    match e:
        case Const():
            return e
        case Var(n):
            return replacement if n == name else e
        case Unary(op, arg):
            return Unary(op, substitute(arg, name, replacement))
        case Binary(op, left, right):
            return Binary(
                op, substitute(left, name, replacement), substitute(right, name, replacement)
            )
        case Call(func, args):
            return Call(func, tuple(substitute(a, name, replacement) for a in args))
        case Member(elem, values):
            return Member(
                substitute(elem, name, replacement),
                tuple(substitute(v, name, replacement) for v in values),
            )
        case Quant(kind, var, lo, hi, body):
            lo, hi = substitute(lo, name, replacement), substitute(hi, name, replacement)
            if var == name:
                return Quant(kind, var, lo, hi, body)
            if var in free_vars(replacement):
                taken = free_vars(body) | free_vars(replacement) | {name}
                fresh = next(f"{var}_{i}" for i in itertools.count(1) if f"{var}_{i}" not in taken)
                body = substitute(body, var, Var(fresh))
                var = fresh
            return Quant(kind, var, lo, hi, substitute(body, name, replacement))
    raise TypeError(f"not an expression: {e!r}")


def infer_type(e: Expr, types: Mapping[str, VarType]) -> VarType:
    """Static type of *e* under *types*; raises EvaluationError when ill-typed."""
    match e:
        case Const(value):
            return type_of_value(value)
        case Var(name):
            if name not in types:
                raise EvaluationError(f"undeclared variable {name!r}")
            return types[name]
        case Unary("-", arg):
            _expect(arg, types, VarType.INT, "-")
            return VarType.INT
        case Unary("not", arg):
            _expect(arg, types, VarType.BOOL, "not")
            return VarType.BOOL
        case Binary(op, left, right) if op in BOOL_OPS:
            _expect(left, types, VarType.BOOL, op)
            _expect(right, types, VarType.BOOL, op)
            return VarType.BOOL
        case Binary(op, left, right) if op in ("=", "!="):
            lt, rt = infer_type(left, types), infer_type(right, types)
            if lt != rt:
                raise EvaluationError(
                    f"{op} compares {lt.value} with {rt.value} in {format_expr(e)}"
                )
            return VarType.BOOL
        case Binary(op, left, right) if op in COMPARE_OPS:
            _expect(left, types, VarType.INT, op)
            _expect(right, types, VarType.INT, op)
            return VarType.BOOL
        case Binary(op, left, right):
            _expect(left, types, VarType.INT, op)
            _expect(right, types, VarType.INT, op)
            return VarType.INT
        case Call(func, args):
            if func not in FUNCTIONS:
                raise EvaluationError(f"unknown function {func!r}")
            if len(args) != FUNCTIONS[func]:
                raise EvaluationError(f"{func} takes {FUNCTIONS[func]} arguments, got {len(args)}")
            for a in args:
                _expect(a, types, VarType.INT, func)
            return VarType.INT
        case Member(elem, values):
            t = infer_type(elem, types)
            for v in values:
                _expect(v, types, t, "in")
            return VarType.BOOL
        case Quant(kind, var, lo, hi, body):
            _expect(lo, types, VarType.INT, kind)
            _expect(hi, types, VarType.INT, kind)
            _expect(body, {**types, var: VarType.INT}, VarType.BOOL, kind)
            return VarType.BOOL
    raise EvaluationError(f"not an expression: {e!r}")


def _expect(e: Expr, types: Mapping[str, VarType], want: VarType, where: str) -> None:
    got = infer_type(e, types)
    if got != want:
        raise EvaluationError(f"{where} expects {want.value}, got {got.value} in {format_expr(e)}")


def format_expr(e: Expr, parent: int = 0) -> str:
    """Re-parseable text of *e*, parenthesised by binding power."""
    match e:
        case Const(value):
            if isinstance(value, int) and not isinstance(value, bool) and value < 0:
                return f"({value})"
            return format_value(value)
        case Var(name):
            return name
        case Unary(op, arg):
            power = PREFIX_PRECEDENCE[op]
            sep = " " if op == "not" else ""
            text = f"{op}{sep}{format_expr(arg, power)}"
            return f"({text})" if power < parent else text
        case Binary(op, left, right):
            lbp, rbp = BINARY_PRECEDENCE[op]
            text = f"{format_expr(left, lbp)} {op} {format_expr(right, rbp)}"
            return f"({text})" if min(lbp, rbp) < parent else text
        case Call(func, args):
            return f"{func}(" + ", ".join(format_expr(a) for a in args) + ")"
        case Member(elem, values):
            listed = ", ".join(format_expr(v) for v in values)
            text = f"{format_expr(elem, 51)} in {{{listed}}}"
            return f"({text})" if 50 < parent else text
        case Quant(kind, var, lo, hi, body):
            bounds = f"{format_expr(lo, 100)}..{format_expr(hi, 100)}"
            text = f"{kind} {var} in {bounds} . {format_expr(body)}"
            return f"({text})" if parent > 0 else text
    raise TypeError(f"not an expression: {e!r}")


# ──────────────────────────── Distributions ───────────────────────────────────


@dataclass(frozen=True)
class Distribution:
    """Finite-support (sub-)probability distribution over classical values."""

    atoms: tuple[tuple[Value, float], ...]

    def __post_init__(self) -> None:
        values = [v for v, _ in self.atoms]
        if len(set((type(v), v) for v in values)) != len(values):
            raise DistributionError(f"distribution support has repeated values: {values}")
        if len({type_of_value(v) for v in values}) > 1:
            raise DistributionError("distribution mixes booleans and integers")
        if any(p < 0 for _, p in self.atoms):
            raise DistributionError("distribution has a negative probability")
        if self.total > 1.0 + DIST_TOL:
            raise DistributionError(f"distribution mass {self.total} exceeds 1")

    @classmethod
    def uniform(cls, lo: int, hi: int) -> Distribution:
        if hi < lo:
            raise DistributionError(f"empty uniform range {lo}..{hi}")
        p = 1.0 / (hi - lo + 1)
        return cls(tuple((v, p) for v in range(lo, hi + 1)))

    @classmethod
    def point(cls, v: Value) -> Distribution:
        return cls(((v, 1.0),))

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[Value, float]]) -> Distribution:
        return cls(tuple((v, float(p)) for v, p in pairs))

    @property
    def total(self) -> float:
        return float(sum(p for _, p in self.atoms))

    @property
    def value_type(self) -> VarType | None:
        return type_of_value(self.atoms[0][0]) if self.atoms else None

    def __str__(self) -> str:
        lo_hi = [v for v, _ in self.atoms]
        if (
            len(self.atoms) > 1
            and all(isinstance(v, int) and not isinstance(v, bool) for v in lo_hi)
            and lo_hi == list(range(lo_hi[0], lo_hi[0] + len(lo_hi)))
            and all(abs(p - 1.0 / len(lo_hi)) <= DIST_TOL for _, p in self.atoms)
        ):
            return f"unif({lo_hi[0]}, {lo_hi[-1]})"
        if len(self.atoms) == 1 and self.atoms[0][1] == 1.0:
            return f"point({format_value(self.atoms[0][0])})"
        return "{" + ", ".join(f"{format_value(v)} : {p!r}" for v, p in self.atoms) + "}"
