"""Case-study builders: teleportation, Grover, QFT, phase estimation, order finding, Shor.

Each builder renders a program template, attaches pre/postcondition files and the analytic
reference quantities the program is expected to meet.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Any

import numpy as np

from cq_hoare.classical import ClassicalState, Expr
from cq_hoare.cqmodel import CqAssertion, CqState
from cq_hoare.formats import parse_assertion
from cq_hoare.hoare import universe_for
from cq_hoare.lang import parse
from cq_hoare.lang.parser import parse_expr
from cq_hoare.gates import OperatorTable
from cq_hoare.lang.syntax import SourceProgram, UnitaryRef
from cq_hoare.linalg import as_dense
from cq_hoare.renderer import render_program
from cq_hoare.semantics import initial_state

logger = logging.getLogger(__name__)


# ── Domain types ─────────────────────────────────────────────────────


@dataclass(frozen=True)
class Reference:
    """A reference quantity with where it comes from."""

    value: Any
    provenance: str

    @property
    def display(self) -> str:
        if isinstance(self.value, float):
            return f"{self.value:.10g}"
        if isinstance(self.value, (tuple, list, set, frozenset)):
            return "{" + ", ".join(str(v) for v in sorted(self.value)) + "}"
        return str(self.value)


@dataclass
class CaseSpec:
    name: str
    parameters: dict[str, Any]
    source: str
    references: dict[str, Reference] = field(default_factory=dict)
    pre: str | None = None
    post: str | None = None
    mode: str = "total"
    # (invariant, ranking) per while loop, in pre-order
    rankings: list[tuple[str, str]] = field(default_factory=list)
    assertions: dict[str, str] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @cached_property
    def program(self) -> SourceProgram:
        return parse(self.source)

    def precondition(self) -> CqAssertion:
        return parse_assertion(self.pre or "(true) : 1", self.program)

    def postcondition(self) -> CqAssertion:
        return parse_assertion(self.post or "(true) : 1", self.program)

    def assertion(self, key: str) -> CqAssertion:
        return parse_assertion(self.assertions[key], self.program)

    def ranking(self, index: int = 0) -> tuple[Expr, Expr]:
        invariant, rank = self.rankings[index]
        consts = self.program.constants
        return parse_expr(invariant, consts), parse_expr(rank, consts)

    def universe(self) -> list[ClassicalState]:
        return universe_for(self.program)

    def reference(self, key: str) -> Any:
        return self.references[key].value


def _scalar(p: float) -> str:
    return repr(float(p))


# ── number theory ────────────────────────────────────────────────────


def order_of(x: int, modulus: int) -> int:
    """Least r > 0 with x^r ≡ 1 (mod modulus)."""
    if modulus < 2 or math.gcd(x, modulus) != 1:
        raise ValueError(f"{x} has no order modulo {modulus}")
    r, y = 1, x % modulus
    while y != 1:
        y = (y * x) % modulus
        r += 1
    return r


def prime_factors(n: int) -> list[int]:
    out, p = [], 2
    while p * p <= n:
        if n % p == 0:
            out.append(p)
            while n % p == 0:
                n //= p
        p += 1
    if n > 1:
        out.append(n)
    return out


def prime_factor_count(n: int) -> int:
    """Number of distinct prime factors."""
    return len(prime_factors(n))


def _is_perfect_power(n: int) -> bool:
    for b in range(2, n.bit_length() + 1):
        a = round(n ** (1.0 / b))
        if any(c > 1 and c**b == n for c in (a - 1, a, a + 1)):
            return True
    return False


def is_cmp(n: int) -> bool:
    """Odd composite greater than 2 that is not a perfect power."""
    return n > 2 and n % 2 == 1 and len(prime_factors(n)) > 1 and not _is_perfect_power(n)


@dataclass
class KeyLemmaReport:
    modulus: int
    factor_clause: bool
    fraction: float
    bound: float
    failures: list[int] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return self.factor_clause and self.fraction >= self.bound


def shor_key_lemma(n: int) -> KeyLemmaReport:
    """Check, for every x coprime to n, the two number-theoretic facts Shor's reduction uses."""
    if not is_cmp(n):
        raise ValueError(f"{n} is not an odd composite non-prime-power")
    coprime = [x for x in range(1, n) if math.gcd(x, n) == 1]
    good, failures = 0, []
    for x in coprime:
        r = order_of(x, n)
        half = pow(x, r // 2, n)
        if r % 2 == 1 or half == n - 1:
            continue
        good += 1
        if not any(1 < math.gcd(half + d, n) < n for d in (-1, 1)):
            failures.append(x)
    m = prime_factor_count(n)
    return KeyLemmaReport(
        modulus=n,
        factor_clause=not failures,
        fraction=good / len(coprime),
        bound=1.0 - 1.0 / 2 ** (m - 1),
        failures=failures,
    )


# ── reference quantities ─────────────────────────────────────────────


def _grover_angle(n: int, marked: int) -> float:
    size = 2**n
    return 2.0 * math.acos(math.sqrt((size - marked) / size))


def grover_iterations(n: int, marked: int) -> int:
    """The integer K in (π/2θ − 1, π/2θ]."""
    return math.floor(math.pi / (2.0 * _grover_angle(n, marked)))


def grover_success(n: int, marked: int, iterations: int | None = None) -> float:
    """``sin²((2K+1)θ/2)``."""
    k = grover_iterations(n, marked) if iterations is None else iterations
    return math.sin((2 * k + 1) * _grover_angle(n, marked) / 2.0) ** 2


def pe_precision(n: int, eps: float) -> int:
    """Counting qubits ``t = n + ⌈log(2 + 1/2ε)⌉`` for n bits with failure at most ε."""
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    return n + math.ceil(math.log2(2.0 + 1.0 / (2.0 * eps)))


def pe_outcome_distribution(phi: float, t: int) -> np.ndarray:
    """Probability of each outcome z of t-qubit phase estimation for the phase φ."""
    size = 2**t
    j = np.arange(size)
    delta = phi - np.arange(size) / size
    amps = np.exp(2j * np.pi * np.outer(delta, j)).sum(axis=1) / size
    return np.abs(amps) ** 2


def of_precision(modulus: int, eps: float) -> tuple[int, int]:
    """``(L, t)`` with ``L = ⌈log N⌉`` and ``t = 2L + 1 + ⌈log(2 + 1/2ε)⌉``."""
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    bits = math.ceil(math.log2(modulus))
    return bits, 2 * bits + 1 + math.ceil(math.log2(2.0 + 1.0 / (2.0 * eps)))


def of_bound(modulus: int, eps: float) -> float:
    """``(1 − ε) / (2 log N)`` with the logarithm taken base 2."""
    return (1.0 - eps) / (2.0 * math.log2(modulus))


def of_success_formula(x: int, modulus: int, t: int) -> float:
    """Probability mass on outcomes k within 2^-(2L+1) of s/r, summed over s coprime to r."""
    r = order_of(x, modulus)
    bits = math.ceil(math.log2(modulus))
    size = 2**t
    j = np.arange(size)
    ks = np.arange(size)
    total = 0.0
    for s in range(r):
        if math.gcd(s, r) != 1:
            continue
        near = ks[np.abs(s / r - ks / size) < 1.0 / 2 ** (2 * bits + 1)]
        if near.size == 0:
            continue
        delta = s / r - near / size
        amps = np.exp(2j * np.pi * np.outer(delta, j)).sum(axis=1) / size
        total += float(np.sum(np.abs(amps) ** 2)) / r
    return total


def shor_bound(modulus: int, p_of: float) -> float:
    """``p_OF · (1 − 1/2^(m−1))`` with m the number of distinct prime factors."""
    return p_of * (1.0 - 1.0 / 2 ** (prime_factor_count(modulus) - 1))


# ── builders ─────────────────────────────────────────────────────────


_KETS = {"0": np.array([1, 0]), "1": np.array([0, 1])}
_KETS["+"] = (_KETS["0"] + _KETS["1"]) / math.sqrt(2)
_KETS["-"] = (_KETS["0"] - _KETS["1"]) / math.sqrt(2)


def teleport(psi: str = "+") -> CaseSpec:
    """Teleportation of the qubit state ket(psi) from q to q2."""
    if psi not in _KETS:
        raise ValueError(f"psi must be one of {sorted(_KETS)}, got {psi!r}")
    theta1 = "\n".join(
        f"(x = {i}) : proj(ket({i // 2}, {i % 2})) @ q, q1" for i in range(4)
    )
    return CaseSpec(
        name="teleport",
        parameters={"psi": psi},
        source=render_program("teleport"),
        references={
            "exp_measured": Reference(1.0, "closed form: outcome matches the measured basis"),
            "fidelity": Reference(1.0, "closed form: average fidelity of the output"),
        },
        pre=f"(true) : proj(ket({psi})) @ q\n",
        post=f"(true) : proj(ket({psi})) @ q2\n",
        assertions={"measured": theta1 + "\n"},
    )


def teleport_state(psi: np.ndarray, program: SourceProgram | None = None) -> CqState:
    """``<σ0, |ψ><ψ|_q ⊗ |00><00|_{q1,q2}>`` on the teleportation program's layout."""
    program = program or teleport().program
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    rest = np.zeros(program.layout.dim // psi.shape[0], dtype=complex)
    rest[0] = 1.0
    return initial_state(program, vector=np.kron(psi, rest))


def grover(n: int = 2, sols: Sequence[int] = (2,)) -> CaseSpec:
    sols = tuple(sorted(set(int(s) for s in sols)))
    size = 2**n
    if n < 1 or not 0 < len(sols) < size / 2:
        raise ValueError(f"Grover needs 0 < |Sol| < 2^n/2, got {len(sols)} of {size}")
    if any(not 0 <= s < size for s in sols):
        raise ValueError(f"solutions must lie in 0..{size - 1}")
    k = grover_iterations(n, len(sols))
    p = grover_success(n, len(sols))
    logger.info("grover: n=%d, |Sol|=%d, K=%d", n, len(sols), k)
    return CaseSpec(
        name="grover",
        parameters={"n": n, "sols": sols},
        source=render_program("grover", n=n, K=k, sols=sols),
        references={
            "theta": Reference(_grover_angle(n, len(sols)), "closed form: cos(θ/2) = √((N−D)/N)"),
            "K": Reference(k, "closed form: K in (π/2θ − 1, π/2θ]"),
            "p_succ": Reference(p, "closed form: sin²((2K+1)θ/2)"),
        },
        pre=f"(true) : {_scalar(p)}\n",
        post=f"(y in {{{', '.join(map(str, sols))}}}) : 1\n",
        rankings=[("0 <= x and x <= K", "K - x")],
    )


def qft(n: int = 2) -> CaseSpec:
    if n < 1:
        raise ValueError(f"QFT needs at least one qubit, got {n}")
    zeros = ", ".join("0" * n)
    pluses = ", ".join("+" * n)
    return CaseSpec(
        name="qft",
        parameters={"n": n},
        source=render_program("qft", n=n),
        references={"fidelity_floor": Reference(1.0 - 1e-9, "tolerance on the DFT matrix")},
        pre=f"(true) : proj(ket({zeros})) @ q\n",
        post=f"(true) : proj(ket({pluses})) @ q\n",
        rankings=[
            ("1 <= x and x <= n + 1", "n + 1 - x"),
            ("1 <= x and x <= n and x + 1 <= y and y <= n + 1", "n + 1 - y"),
        ],
    )


# unitary preparing ket(label) from |0>
_EIGVEC_PREP = {"0": "I", "1": "X", "+": "H", "-": "H * X"}
PHASE_DENOMINATOR_MAX = 2**12


def _eigenphase(source: str, eigvec: str) -> Fraction:
    program = parse(source)
    u = as_dense(OperatorTable.for_program(program).unitary(UnitaryRef("U")))
    if u.shape != (2, 2):
        raise ValueError(f"phase estimation needs a qubit unitary, not dimension {u.shape[0]}")
    v = _KETS[eigvec].astype(complex)
    image = u @ v
    lam = complex(np.vdot(v, image))
    if np.linalg.norm(image - lam * v) > 1e-9:
        raise ValueError(f"ket({eigvec}) is not an eigenvector of the unitary")
    phi = (np.angle(lam) / (2 * math.pi)) % 1.0
    frac = Fraction(phi).limit_denominator(PHASE_DENOMINATOR_MAX)
    if abs(float(frac) - phi) > 1e-9:
        raise ValueError(f"eigenphase {phi:.12g} is not a fraction with denominator ≤ 2^12")
    return frac % 1


def pe(
    n: int = 1,
    eps: float = 0.25,
    num: int = 1,
    den: int = 2,
    gate: str | None = None,
    eigvec: str = "1",
) -> CaseSpec:
    """Phase estimation of a single-qubit unitary on one of its eigenstates.

    Without *gate* the unitary is ``phase(num, den)`` on |1>, so φ = num/den.  With *gate* any
    single-qubit operator expression (``T``, ``Z``, ``X``, ``phase(1, 3)``, ...) is estimated on
    ``ket(eigvec)`` for eigvec in 0, 1, +, -; num and den are then read off its eigenphase, which
    must be a fraction with denominator at most 2^12.
    """
    if eigvec not in _EIGVEC_PREP:
        raise ValueError(f"eigvec must be one of {sorted(_EIGVEC_PREP)}, got {eigvec!r}")
    t = pe_precision(n, eps)
    if gate is None:
        if not 0 <= num < den:
            raise ValueError(f"the phase num/den must lie in [0, 1), got {num}/{den}")
        gate = f"phase({num}, {den})"
    source = render_program("pe", t=t, gate=gate, eigvec=eigvec, prep=_EIGVEC_PREP[eigvec])
    phase = _eigenphase(source, eigvec)
    num, den = phase.numerator, phase.denominator
    phi = num / den
    dist = pe_outcome_distribution(phi, t)
    hits = [z for z in range(2**t) if abs(phi - z / 2**t) < 2.0**-n]
    p = float(sum(dist[z] for z in hits))
    logger.info("pe: %s on ket(%s), φ=%d/%d, n=%d, eps=%g, t=%d", gate, eigvec, num, den, n, eps, t)
    return CaseSpec(
        name="pe",
        parameters={"n": n, "eps": eps, "num": num, "den": den, "gate": gate, "eigvec": eigvec},
        source=source,
        references={
            "t": Reference(t, "closed form: n + ⌈log(2 + 1/2ε)⌉"),
            "phi": Reference(phi, f"eigenphase of {gate} on ket({eigvec})"),
            "p_PE": Reference(p, "closed form: outcome distribution summed over the window"),
            "bound": Reference(1.0 - eps, "closed form: 1 − ε"),
        },
        pre=f"(true) : {_scalar(p)}\n",
        post=f"(abs({num} * {2**t} - z * {den}) < {den * 2 ** (t - n)}) : 1\n",
        rankings=[
            ("1 <= x and x <= t + 1", "t + 1 - x"),
            ("1 <= x and x <= t and 0 <= y and y <= 2 ^ (t - x)", "2 ^ (t - x) - y"),
        ],
    )


def _order_finding_size(
    modulus: int, eps: float, t: int | None, name: str
) -> tuple[int, int, list[str]]:
    bits, t_full = of_precision(modulus, eps)
    notes = []
    if t is None:
        t = t_full
    elif t < t_full:
        logger.warning("%s: t=%d is below %d; the analytic bound does not apply", name, t, t_full)
        notes.append(f"reduced t={t} (< {t_full}): the analytic success bound is not guaranteed")
    return bits, t, notes


def of(x: int = 7, N: int = 15, eps: float = 0.5, t: int | None = None) -> CaseSpec:  # noqa: N803
    """Order finding for x modulo N."""
    if N < 3 or math.gcd(x, N) != 1 or not 1 <= x < N:
        raise ValueError(f"order finding needs 1 <= x < N with gcd(x, N) = 1, got x={x}, N={N}")
    bits, t, notes = _order_finding_size(N, eps, t, "of")
    r = order_of(x, N)
    formula = of_success_formula(x, N, t)
    logger.info("of: x=%d, N=%d, t=%d, L=%d", x, N, t, bits)
    return CaseSpec(
        name="of",
        parameters={"x": x, "N": N, "eps": eps, "t": t},
        source=render_program("of", x=x, N=N, t=t, L=bits),
        references={
            "L": Reference(bits, "closed form: ⌈log N⌉"),
            "t": Reference(t, "closed form: 2L + 1 + ⌈log(2 + 1/2ε)⌉"),
            "r": Reference(r, "number theory: order of x modulo N"),
            "p_OF": Reference(formula, "closed form: mass within 2^-(2L+1) of s/r, gcd(s, r) = 1"),
            "bound": Reference(of_bound(N, eps), "closed form: (1 − ε)/(2 log N), log base 2"),
        },
        pre=f"(true) : {_scalar(formula)}\n",
        post=f"(z = {r}) : 1\n",
        notes=notes,
    )


def shor(N: int = 15, eps: float = 0.5, t: int | None = None) -> CaseSpec:  # noqa: N803
    if not is_cmp(N):
        raise ValueError(f"Shor needs an odd composite non-prime-power N, got {N}")
    bits, t, notes = _order_finding_size(N, eps, t, "shor")
    p_of = of_bound(N, eps)
    p = shor_bound(N, p_of)
    logger.info("shor: N=%d, t=%d, L=%d", N, t, bits)
    return CaseSpec(
        name="shor",
        parameters={"N": N, "eps": eps, "t": t},
        source=render_program("shor", N=N, t=t, L=bits),
        references={
            "m": Reference(prime_factor_count(N), "number theory: distinct prime factors"),
            "p_OF": Reference(p_of, "closed form: (1 − ε)/(2 log N), log base 2"),
            "p_Shor": Reference(p, "closed form: p_OF (1 − 1/2^(m−1))"),
            "factors": Reference(tuple(prime_factors(N)), "number theory"),
        },
        pre=f"(true) : {_scalar(p)}\n",
        post=f"(1 < y and y < {N} and {N} mod y = 0) : 1\n",
        notes=notes,
    )


# ── registry ─────────────────────────────────────────────────────────


CASES: dict[str, Callable[..., CaseSpec]] = {
    "teleport": teleport,
    "grover": grover,
    "qft": qft,
    "pe": pe,
    "of": of,
    "shor": shor,
}


def _int_tuple(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.replace("{", "").replace("}", "").split(",") if p.strip())


_PARAM_TYPES: dict[str, Callable[[str], Any]] = {
    "n": int,
    "sols": _int_tuple,
    "eps": float,
    "num": int,
    "den": int,
    "x": int,
    "N": int,
    "t": int,
    "psi": str,
    "gate": str,
    "eigvec": str,
}


def build(name: str, params: dict[str, str] | None = None) -> CaseSpec:
    """Build a case study from string parameters (as given on the command line)."""
    builder = CASES.get(name)
    if builder is None:
        raise ValueError(f"unknown case study {name!r}; choose from {', '.join(CASES)}")
    kwargs: dict[str, Any] = {}
    for key, raw in (params or {}).items():
        convert = _PARAM_TYPES.get(key)
        if convert is None:
            raise ValueError(f"unknown parameter {key!r} for {name}")
        try:
            kwargs[key] = convert(raw)
        except ValueError as exc:
            raise ValueError(f"bad value {raw!r} for {key}: {exc}") from exc
    try:
        return builder(**kwargs)
    except TypeError as exc:
        raise ValueError(f"{name}: {exc}") from exc


__all__ = [
    "CASES",
    "CaseSpec",
    "KeyLemmaReport",
    "Reference",
    "build",
    "grover",
    "grover_iterations",
    "grover_success",
    "is_cmp",
    "of",
    "of_bound",
    "of_precision",
    "of_success_formula",
    "order_of",
    "pe",
    "pe_outcome_distribution",
    "pe_precision",
    "prime_factor_count",
    "prime_factors",
    "qft",
    "shor",
    "shor_bound",
    "shor_key_lemma",
    "teleport",
    "teleport_state",
]
