"""Builtin gates, operator-expression evaluation and per-program operator tables.

Builtins are registered in ``_BUILTINS`` through :func:`_register`.  Permutation builtins
(``modmul``, ``cmodexp``, ``increment``, ``swapn``) return :class:`~cq_hoare.linalg.Permutation`
objects, and the algebra below keeps them as permutations whenever it can.
"""

from __future__ import annotations

import cmath
import logging
import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from cq_hoare.lang.syntax import (
    COMPUTATIONAL,
    OBasis,
    OBin,
    OCall,
    OMatrix,
    OName,
    ONeg,
    ONum,
    OpExpr,
    OSet,
    SourceProgram,
    UnitaryDecl,
    UnitaryRef,
)
from cq_hoare.linalg import (
    LinalgError,
    Operator,
    Permutation,
    adjoint,
    as_dense,
    basis_projectors,
    is_unitary,
)

logger = logging.getLogger(__name__)

# Dense unitarity checks are skipped above this dimension.
UNITARITY_CHECK_LIMIT = 256

OpValue = Union[complex, np.ndarray, Permutation, tuple]


class OperatorError(LinalgError):
    """An operator expression that cannot be evaluated or has the wrong shape."""


# ──────────────────────────── Builtin registry ────────────────────────────────


@dataclass(frozen=True)
class Builtin:
    name: str
    arity: int | None  # None = variadic
    fn: Callable[..., OpValue]
    doc: str = ""


_BUILTINS: dict[str, Builtin] = {}


def _register(name: str, arity: int | None, doc: str = "") -> Callable:
    def wrap(fn: Callable[..., OpValue]) -> Callable[..., OpValue]:
        _BUILTINS[name] = Builtin(name, arity, fn, doc)
        return fn

    return wrap


def builtin_names() -> list[str]:
    return sorted(_BUILTINS)


def _int_arg(v: OpValue, what: str) -> int:
    if isinstance(v, (complex, float, int)) and not isinstance(v, bool):
        c = complex(v)
        if c.imag == 0 and float(c.real).is_integer():
            return int(c.real)
    raise OperatorError(f"{what} expects an integer argument, got {v!r}")


def _qubits(n: OpValue, what: str) -> int:
    k = _int_arg(n, what)
    if k < 1:
        raise OperatorError(f"{what} needs at least one qubit, got {k}")
    return k


_SQ2 = 1 / math.sqrt(2)
_FIXED = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "H": np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=complex),
    "S": np.diag([1, 1j]).astype(complex),
    "T": np.diag([1, cmath.exp(1j * math.pi / 4)]).astype(complex),
    "CZ": np.diag([1, 1, 1, -1]).astype(complex),
}

for _name, _m in _FIXED.items():
    _register(_name, 0)(lambda _m=_m: _m.copy())


@_register("CNOT", 0, "controlled-X, first qubit controls")
def _cnot() -> Permutation:
    return Permutation(np.array([0, 1, 3, 2]))


@_register("SWAP", 0)
def _swap() -> Permutation:
    return Permutation(np.array([0, 2, 1, 3]))


@_register("I", None, "identity on dimension d (default 2)")
def _identity(*args: OpValue) -> np.ndarray:
    d = _int_arg(args[0], "I") if args else 2
    return np.eye(d, dtype=complex)


@_register("R", 1, "diag(1, exp(2πi/2^k))")
def _rk(k: OpValue) -> np.ndarray:
    k = _int_arg(k, "R")
    return np.diag([1, cmath.exp(2j * math.pi / 2**k)]).astype(complex)


@_register("phase", 2, "diag(1, exp(2πi·num/den))")
def _phase(num: OpValue, den: OpValue) -> np.ndarray:
    a, b = _int_arg(num, "phase"), _int_arg(den, "phase")
    if b == 0:
        raise OperatorError("phase denominator is zero")
    return np.diag([1, cmath.exp(2j * math.pi * a / b)]).astype(complex)


@_register("swapn", 1, "reverse the order of n qubits")
def swapn(n: OpValue) -> Permutation:
    n = _qubits(n, "swapn")
    idx = np.arange(2**n)
    rev = np.zeros_like(idx)
    for bit in range(n):
        rev |= ((idx >> bit) & 1) << (n - 1 - bit)
    return Permutation(rev)


@_register("qft", 1, "|j> -> 2^(-n/2) Σ_k exp(2πijk/2^n) |k>")
def qft_matrix(n: OpValue) -> np.ndarray:
    n = _qubits(n, "qft")
    d = 2**n
    jk = np.outer(np.arange(d), np.arange(d)) % d
    return np.exp(2j * np.pi * jk / d) / math.sqrt(d)


@_register("controlled", 1, "|0><0| ⊗ I + |1><1| ⊗ U")
def controlled(u: OpValue) -> Operator:
    u = _operator(u, "controlled")
    d = u.shape[0]
    if isinstance(u, Permutation):
        return Permutation(np.concatenate([np.arange(d), d + u.image]))
    out = np.eye(2 * d, dtype=complex)
    out[d:, d:] = u
    return out


@_register("oracle", 2, "diag(±1) with -1 on the marked set")
def oracle(n: OpValue, marked: OpValue) -> np.ndarray:
    n = _qubits(n, "oracle")
    if not isinstance(marked, tuple):
        raise OperatorError("oracle expects a set {s, ...} as second argument")
    diag = np.ones(2**n, dtype=complex)
    for s in marked:
        s = _int_arg(s, "oracle")
        if not 0 <= s < 2**n:
            raise OperatorError(f"oracle element {s} outside 0..{2**n - 1}")
        diag[s] = -1
    return np.diag(diag)


@_register("diffusion", 1, "2|ψ><ψ| - I with |ψ> the uniform superposition")
def diffusion(n: OpValue) -> np.ndarray:
    d = 2 ** _qubits(n, "diffusion")
    return np.full((d, d), 2.0 / d, dtype=complex) - np.eye(d, dtype=complex)


@_register("increment", 1, "|y> -> |y+1 mod 2^L>")
def increment(n: OpValue) -> Permutation:
    d = 2 ** _qubits(n, "increment")
    return Permutation((np.arange(d) + 1) % d)


def _check_modulus(x: int, modulus: int, bits: int, what: str) -> None:
    if modulus < 1 or modulus > 2**bits:
        raise OperatorError(f"{what}: modulus {modulus} does not fit in {bits} qubits")
    if math.gcd(x, modulus) != 1:
        raise OperatorError(f"{what}: {x} is not invertible modulo {modulus}")


@_register("modmul", 3, "|y> -> |x·y mod N> for y < N, identity above")
def modmul(x: OpValue, modulus: OpValue, bits: OpValue) -> Permutation:
    x, modulus, bits = (_int_arg(v, "modmul") for v in (x, modulus, bits))
    _check_modulus(x, modulus, bits, "modmul")
    y = np.arange(2**bits)
    image = np.where(y < modulus, (x * y) % modulus, y)
    return Permutation(image)


@_register("cmodexp", 4, "|j>|y> -> |j> U^j |y> with U = modmul(x, N, L)")
def cmodexp(x: OpValue, modulus: OpValue, t: OpValue, bits: OpValue) -> Permutation:
    x, modulus, t, bits = (_int_arg(v, "cmodexp") for v in (x, modulus, t, bits))
    _check_modulus(x, modulus, bits, "cmodexp")
    powers = np.array([pow(x, j, modulus) for j in range(2**t)], dtype=np.int64)
    y = np.arange(2**bits, dtype=np.int64)
    moved = np.where(y[None, :] < modulus, (powers[:, None] * y[None, :]) % modulus, y[None, :])
    image = (np.arange(2**t, dtype=np.int64)[:, None] << bits) + moved
    return Permutation(image.reshape(-1))


@_register("adj", 1)
def _adj(a: OpValue) -> Operator:
    return adjoint(_operator(a, "adj"))


@_register("kron", None)
def _kron(*args: OpValue) -> OpValue:
    if not args:
        raise OperatorError("kron needs at least one argument")
    out = args[0]
    for a in args[1:]:
        out = _kron2(out, a)
    return out


@_register("tensorpow", 2)
def _tensorpow(a: OpValue, n: OpValue) -> OpValue:
    k = _qubits(n, "tensorpow")
    return _kron(*([a] * k))


@_register("power", 2, "A^k for a non-negative integer k")
def _power(a: OpValue, k: OpValue) -> Operator:
    a, k = _operator(a, "power"), _int_arg(k, "power")
    if k < 0:
        raise OperatorError("power expects a non-negative exponent")
    if isinstance(a, Permutation):
        image = np.arange(a.dim)
        for _ in range(k):
            image = a.image[image]
        return Permutation(image)
    return np.linalg.matrix_power(a, k)


@_register("diag", None)
def _diag(*args: OpValue) -> np.ndarray:
    return np.diag([_scalar(a, "diag") for a in args]).astype(complex)


for _fname, _f in (
    ("sqrt", cmath.sqrt), ("exp", cmath.exp), ("cos", cmath.cos), ("sin", cmath.sin)
):
    _register(_fname, 1)(lambda a, _f=_f, _n=_fname: _f(_scalar(a, _n)))


# ──────────────────────────── Evaluation ──────────────────────────────────────


def _scalar(v: OpValue, what: str) -> complex:
    if isinstance(v, (complex, float, int)) and not isinstance(v, bool):
        return complex(v)
    raise OperatorError(f"{what} expects a scalar")


def _operator(v: OpValue, what: str) -> Operator:
    if isinstance(v, Permutation):
        return v
    if isinstance(v, np.ndarray) and v.ndim == 2 and v.shape[0] == v.shape[1]:
        return v
    raise OperatorError(f"{what} expects a square matrix")


def _is_scalar(v: OpValue) -> bool:
    return isinstance(v, (complex, float, int)) and not isinstance(v, bool)


def _kron2(a: OpValue, b: OpValue) -> OpValue:
    if isinstance(a, Permutation) and isinstance(b, Permutation):
        return Permutation(np.add.outer(a.image * b.dim, b.image).reshape(-1))
    if _is_scalar(a) or _is_scalar(b):
        return _mul(a, b)
    if isinstance(a, np.ndarray) and isinstance(b, np.ndarray) and a.ndim == 1 and b.ndim == 1:
        return np.kron(a, b)
    return np.kron(as_dense(_operator(a, "kron")), as_dense(_operator(b, "kron")))


def _dense(v: OpValue) -> np.ndarray:
    return v.to_dense() if isinstance(v, Permutation) else v


def _add(a: OpValue, b: OpValue, sign: float) -> OpValue:
    if _is_scalar(a) and _is_scalar(b):
        return complex(a) + sign * complex(b)
    if _is_scalar(a) or _is_scalar(b) or isinstance(a, tuple) or isinstance(b, tuple):
        raise OperatorError("cannot add a scalar to a vector or matrix")
    a, b = _dense(a), _dense(b)
    if a.shape != b.shape:
        raise OperatorError(f"cannot add shapes {a.shape} and {b.shape}")
    return a + sign * b


def _mul(a: OpValue, b: OpValue) -> OpValue:
    if _is_scalar(a) and _is_scalar(b):
        return complex(a) * complex(b)
    if _is_scalar(a):
        return complex(a) * _dense(b)
    if _is_scalar(b):
        return _dense(a) * complex(b)
    if isinstance(a, Permutation) and isinstance(b, Permutation):
        if a.dim != b.dim:
            raise OperatorError(f"cannot compose permutations of size {a.dim} and {b.dim}")
        return Permutation(a.image[b.image])
    a, b = _dense(a), _dense(b)
    if a.ndim != 2 or a.shape[1] != b.shape[0]:
        raise OperatorError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


def _basis(node: OBasis, env: Mapping[str, OpValue]) -> np.ndarray:
    if node.sign:
        return np.array([_SQ2, _SQ2 if node.sign == "+" else -_SQ2], dtype=complex)
    value = evaluate(node.index, env)
    if isinstance(value, np.ndarray) and value.ndim == 1 and node.dim is None:
        return value
    k = _int_arg(value, "ket")
    d = 2 if node.dim is None else _int_arg(evaluate(node.dim, env), "ket")
    if not 0 <= k < d:
        raise OperatorError(f"basis index {k} outside 0..{d - 1}")
    v = np.zeros(d, dtype=complex)
    v[k] = 1.0
    return v


def evaluate(node: OpExpr, env: Mapping[str, OpValue] | None = None) -> OpValue:
    """Value of an operator expression; *env* binds constants, parameters and named operators."""
    env = env or {}
    match node:
        case ONum(value):
            return complex(value)
        case OName("pi"):
            return complex(math.pi)
        case OName(name):
            if name in env:
                return env[name]
            if name in _BUILTINS and _BUILTINS[name].arity in (0, None):
                return _BUILTINS[name].fn()
            raise OperatorError(f"unknown operator name {name!r}")
        case ONeg(arg):
            return _mul(-1.0 + 0j, evaluate(arg, env))
        case OBin("+", left, right):
            return _add(evaluate(left, env), evaluate(right, env), 1.0)
        case OBin("-", left, right):
            return _add(evaluate(left, env), evaluate(right, env), -1.0)
        case OBin("*", left, right):
            return _mul(evaluate(left, env), evaluate(right, env))
        case OBin("/", left, right):
            divisor = _scalar(evaluate(right, env), "/")
            if divisor == 0:
                raise OperatorError("division by zero in operator expression")
            return _mul(evaluate(left, env), 1.0 / divisor)
        case OMatrix(rows):
            values = [[_scalar(evaluate(c, env), "matrix literal") for c in r] for r in rows]
            if len({len(r) for r in values}) != 1:
                raise OperatorError("matrix literal rows have differing lengths")
            return np.array(values, dtype=complex)
        case OSet(items):
            return tuple(evaluate(i, env) for i in items)
        case OBasis():
            return _basis(node, env)
        case OCall("ket" | "proj" as func, args):
            v = np.ones(1, dtype=complex)
            for a in args:
                part = _basis(a, env) if isinstance(a, OBasis) else evaluate(a, env)
                if not (isinstance(part, np.ndarray) and part.ndim == 1):
                    raise OperatorError(f"{func} components must be basis states")
                v = np.kron(v, part)
            return np.outer(v, v.conj()) if func == "proj" else v
        case OCall(func, args):
            b = _BUILTINS.get(func)
            if b is None:
                raise OperatorError(f"unknown operator function {func!r}")
            if b.arity is not None and len(args) != b.arity:
                raise OperatorError(f"{func} takes {b.arity} arguments, got {len(args)}")
            return b.fn(*(evaluate(a, env) for a in args))
    raise OperatorError(f"cannot evaluate operator expression {node!r}")


def as_operator(v: OpValue, what: str = "operator") -> Operator:
    if isinstance(v, Permutation):
        return v
    if _is_scalar(v):
        return np.array([[complex(v)]])
    if isinstance(v, np.ndarray) and v.ndim == 2:
        return v
    raise OperatorError(f"{what} does not evaluate to a matrix")


# ──────────────────────────── Operator tables ─────────────────────────────────


@dataclass
class OperatorTable:
    """Resolves unitary and measurement names of one program, instantiating lazily."""

    program: SourceProgram | None = None
    extra: dict[str, Operator] = field(default_factory=dict)
    _cache: dict[tuple[str, int | None], Operator] = field(default_factory=dict, repr=False)
    _meas_cache: dict[tuple[str, int], tuple[Operator, ...]] = field(
        default_factory=dict, repr=False
    )

    @classmethod
    def for_program(cls, program: SourceProgram) -> OperatorTable:
        return cls(program=program)

    def define(self, name: str, op: Operator) -> None:
        """Register an operator directly (used by generated programs)."""
        self.extra[name] = op

    def _scope(self, before: str | None = None) -> _Scope:
        """Constants plus the plain unitaries declared before *before* (all when None)."""
        if self.program is None:
            return _Scope(self, {}, set())
        visible = set()
        for u in self.program.unitaries:
            if u.name == before:
                break
            if not u.is_family:
                visible.add(u.name)
        values = {k: complex(v) for k, v in self.program.constants.items()}
        return _Scope(self, values, visible)

    def environment(self) -> Mapping[str, OpValue]:
        """Names visible to assertion and state files: constants and every plain unitary."""
        return self._scope()

    def decl(self, name: str) -> UnitaryDecl | None:
        return self.program.unitary(name) if self.program is not None else None

    def unitary(self, ref: UnitaryRef) -> Operator:
        key = (ref.name, ref.index)
        if key in self._cache:
            return self._cache[key]
        op = self._instantiate(ref)
        if not isinstance(op, Permutation) and op.shape[0] <= UNITARITY_CHECK_LIMIT:
            if not is_unitary(op):
                raise OperatorError(f"{ref} is not unitary")
        self._cache[key] = op
        logger.debug("instantiated %s (dimension %d)", ref, op.shape[0])
        return op

    def _instantiate(self, ref: UnitaryRef) -> Operator:
        if ref.name in self.extra and ref.index is None:
            return self.extra[ref.name]
        decl = self.decl(ref.name)
        if decl is None:
            b = _BUILTINS.get(ref.name)
            if b is not None and b.arity == 0 and ref.index is None:
                return as_operator(b.fn(), ref.name)
            if b is not None and b.arity == 1 and ref.index is not None:
                return as_operator(b.fn(complex(ref.index)), str(ref))
            raise OperatorError(f"unknown unitary {ref.name!r}")
        env = self._scope(ref.name)
        if decl.is_family:
            if ref.index is None:
                raise OperatorError(f"family {ref.name!r} needs an index")
            if not decl.lo <= ref.index <= decl.hi:
                raise OperatorError(f"index {ref.index} outside {decl.lo}..{decl.hi} of {ref.name}")
            env.values[decl.param] = complex(ref.index)
        elif ref.index is not None:
            raise OperatorError(f"{ref.name!r} is not a parametrised family")
        return as_operator(evaluate(decl.expr, env), str(ref))

    def family_range(self, name: str) -> tuple[int, int] | None:
        """Declared index range of a family; None for builtin one-argument gates."""
        decl = self.decl(name)
        if decl is not None and decl.is_family:
            return (decl.lo, decl.hi)
        return None

    def is_family(self, name: str) -> bool:
        decl = self.decl(name)
        if decl is not None:
            return decl.is_family
        b = _BUILTINS.get(name)
        return name not in self.extra and b is not None and b.arity == 1

    def measurement(self, name: str, dim: int) -> tuple[Operator, ...]:
        """Measurement operators, outcome i at position i."""
        key = (name, dim)
        if key in self._meas_cache:
            return self._meas_cache[key]
        if name == COMPUTATIONAL:
            ops: tuple[Operator, ...] = basis_projectors(dim)
        else:
            decl = self.program.measurement(name) if self.program is not None else None
            if decl is None:
                raise OperatorError(f"unknown measurement {name!r}")
            env = self._scope()
            ops = tuple(as_operator(evaluate(e, env), name) for e in decl.operators)
        self._meas_cache[key] = ops
        return ops


class _Scope(Mapping[str, OpValue]):
    """Name lookup for operator expressions; named unitaries are instantiated on first use."""

    def __init__(self, table: OperatorTable, values: dict[str, OpValue], visible: set[str]) -> None:
        self.table = table
        self.values = values
        self.visible = visible

    def __getitem__(self, key: str) -> OpValue:
        if key in self.values:
            return self.values[key]
        if key in self.visible:
            return self.table.unitary(UnitaryRef(key))
        raise KeyError(key)

    def __contains__(self, key: object) -> bool:
        return key in self.values or key in self.visible

    def __iter__(self):
        yield from self.values
        yield from self.visible

    def __len__(self) -> int:
        return len(self.values) + len(self.visible)
