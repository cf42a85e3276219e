"""Executable instances of the auxiliary proof rules.

Every validator checks the premises of one rule instance (with ``hoare.check``) and, only when
they hold, the conclusion.  A verdict with ``premises_hold`` set and ``holds`` false is a
counterexample to the rule.
"""

from __future__ import annotations

import itertools
import logging
from collections.abc import Callable, Sequence
from typing import Any

import numpy as np

from cq_hoare.classical import (
    Const,
    EvaluationError,
    Expr,
    Quant,
    VarType,
    conj,
    disj,
    eq,
    eval_pred,
    free_vars,
    neg,
    substitute,
)
from cq_hoare.cqmodel import (
    CqAssertion,
    LayoutError,
    Term,
    apply_superop_assertion,
    linear_combine_assertions,
    subst_assertion,
)
from cq_hoare.gates import OperatorTable
from cq_hoare.hoare import (
    CheckOptions,
    PremiseError,
    Verdict,
    check,
    check_classical_ranking,
    combine,
    loops,
    probcomp_bound,
    universe_for,
)
from cq_hoare.lang.syntax import (
    COMPUTATIONAL,
    InitQ,
    Measure,
    ParamUnitary,
    Selected,
    SourceProgram,
    Unitary,
    UnitaryRef,
    While,
    seq,
)
from cq_hoare.lang.typecheck import changed_vars, classical_vars, quantum_vars
from cq_hoare.linalg import KrausChannel, QuantumLayout, as_dense, embed, partial_trace

logger = logging.getLogger(__name__)


class UnsupportedRuleError(ValueError):
    """Unknown rule name or bindings the rule cannot be instantiated with."""


Validator = Callable[..., Verdict]

_RULES: dict[str, Validator] = {}


def _register(name: str) -> Callable[[Validator], Validator]:
    def wrap(fn: Validator) -> Validator:
        _RULES[name] = fn
        return fn

    return wrap


def rule_names() -> list[str]:
    return sorted(_RULES)


# ── helpers ──────────────────────────────────────────────────────────


def _verdict(
    name: str,
    premises: Sequence[Verdict],
    side: Sequence[tuple[bool, str]],
    conclusion: Callable[[], Verdict],
) -> Verdict:
    failed = [msg for ok, msg in side if not ok]
    failed += [f"premise {i + 1} fails" for i, v in enumerate(premises) if not v.holds]
    method = f"rule:{name}"
    if failed:
        logger.debug("%s instance is vacuous: %s", name, "; ".join(failed))
        return Verdict(
            holds=False,
            method=method,
            worst_margin=min((v.worst_margin for v in premises), default=0.0),
            diagnostics=failed + ["conclusion not checked"],
            premises_hold=False,
        )
    out = combine(method, [conclusion()])
    out.premises_hold = True
    if not out.holds:
        logger.error("%s: premises hold but the conclusion is refuted", name)
    return out


def _qv(theta: CqAssertion) -> set[str]:
    return set(theta.layout.names)


def _qv_stmt(program: SourceProgram) -> set[str]:
    return set(quantum_vars(program.body, program.registers))


def _with_factor(theta: CqAssertion, factor: np.ndarray, on: Sequence[str], layout) -> CqAssertion:
    """``Θ ⊗ factor`` with *factor* acting on *on* (disjoint from qv(Θ))."""
    big = embed(factor, on, layout)
    return theta.extend(layout).map_matrices(lambda m: m @ big)


def _register_layout(program: SourceProgram, names: Sequence[str]) -> QuantumLayout:
    return QuantumLayout(tuple((n, program.layout.dim_of([n])) for n in names))


# ── special assertions ───────────────────────────────────────────────


@_register("Top")
def _top(program: SourceProgram, opts: CheckOptions, *, layout=None, mode="partial") -> Verdict:
    top = CqAssertion.top(layout or QuantumLayout())
    return _verdict("Top", [], [], lambda: check(top, program, top, mode, opts))


@_register("Bot")
def _bot(program: SourceProgram, opts: CheckOptions, *, layout=None, mode="total") -> Verdict:
    bot = CqAssertion.bottom(layout or QuantumLayout())
    return _verdict("Bot", [], [], lambda: check(bot, program, bot, mode, opts))


# ── statements that leave Θ untouched ───────────────────────────────


@_register("Init0")
def _init0(program, opts, *, theta: CqAssertion, qvars: Sequence[str], mode="total") -> Verdict:
    s = program.with_body(seq(*(InitQ(q) for q in qvars)))
    side = [(not set(qvars) & _qv(theta), "initialised variables occur in Θ")]
    return _verdict("Init0", [], side, lambda: check(theta, s, theta, mode, opts))


@_register("Unit0")
def _unit0(
    program, opts, *, theta: CqAssertion, qvars: Sequence[str], unitary: str, index=None,
    mode="total",
) -> Verdict:
    s = program.with_body(Unitary(tuple(qvars), UnitaryRef(unitary, index)))
    side = [(not set(qvars) & _qv(theta), "transformed variables occur in Θ")]
    return _verdict("Unit0", [], side, lambda: check(theta, s, theta, mode, opts))


@_register("Meas0")
def _meas0(
    program, opts, *, theta: CqAssertion, target: str, qvars: Sequence[str],
    measurement: str = COMPUTATIONAL, mode="total",
) -> Verdict:
    qvars = tuple(qvars)
    s = program.with_body(Measure(target, measurement, qvars))
    side = [(not set(qvars) & _qv(theta), "measured variables occur in Θ")]

    def conclusion() -> Verdict:
        layout = theta.layout.union(_register_layout(program, qvars))
        d = program.layout.dim_of(qvars)
        ops = OperatorTable.for_program(program).measurement(measurement, d)
        parts = []
        for i, op in enumerate(ops):
            m = as_dense(op)
            effect = m.conj().T @ m
            branch = subst_assertion(theta, target, Const(i))
            parts.append(_with_factor(branch, effect, qvars, layout))
        pre = parts[0].plus(*parts[1:])
        return check(pre, s, theta, mode, opts)

    return _verdict("Meas0", [], side, conclusion)


@_register("Param")
def _param(program, opts, *, theta: CqAssertion, stmt: ParamUnitary, mode="total") -> Verdict:
    """Closed-form precondition of ``q[e1..ek] *= U(e)`` summed over distinct index tuples."""
    table = OperatorTable.for_program(program)
    registers = program.registers
    slots = [(t.register, e) for t in stmt.targets if isinstance(t, Selected) for e in t.indices]
    touched = quantum_vars(stmt, registers)
    layout = theta.layout.union(_register_layout(program, sorted(touched)))
    theta_ext = theta.extend(layout)
    if stmt.selector is None:
        members: list[tuple[Expr | None, UnitaryRef]] = [(None, UnitaryRef(stmt.name))]
    elif isinstance(stmt.selector, Const):
        members = [(None, UnitaryRef(stmt.name, stmt.selector.value))]
        rng = table.family_range(stmt.name)
        if rng is not None and not rng[0] <= stmt.selector.value <= rng[1]:
            members = []
    else:
        rng = table.family_range(stmt.name)
        if rng is None:
            raise UnsupportedRuleError(f"{stmt.name!r} is not a declared family")
        members = [
            (eq(stmt.selector, k), UnitaryRef(stmt.name, k)) for k in range(rng[0], rng[1] + 1)
        ]

    terms: list[Term] = []
    ranges = [range(1, len(registers[reg]) + 1) for reg, _ in slots]
    for combo in itertools.product(*ranges):
        it = iter(combo)
        qvars: list[str] = []
        for t in stmt.targets:
            if isinstance(t, Selected):
                qvars.extend(registers[t.register][next(it) - 1] for _ in t.indices)
            else:
                qvars.append(t)
        if len(set(qvars)) != len(qvars):
            continue
        where = [eq(e, k) for (_, e), k in zip(slots, combo)]
        for guard, ref in members:
            u = embed(table.unitary(ref), qvars, layout)
            cond = conj(*where, *([guard] if guard is not None else []))
            for t in theta_ext.terms:
                terms.append(Term(conj(cond, t.guard), u.conj().T @ t.matrix @ u))
    pre = CqAssertion(layout, tuple(terms))
    return _verdict("Param", [], [], lambda: check(pre, program.with_body(stmt), theta, mode, opts))


# ── super-operators on spectator variables ───────────────────────────


@_register("SupOper")
def _supoper(
    program, opts, *, theta: CqAssertion, psi: CqAssertion, channel: KrausChannel,
    on: Sequence[str], mode="total",
) -> Verdict:
    on = tuple(on)
    side = [
        (set(on) <= _qv(theta) and set(on) <= _qv(psi), "channel variables outside Θ or Ψ"),
        (not set(on) & _qv_stmt(program), "the channel acts on variables of S"),
        (channel.is_subunital(), "the channel is not sub-unital"),
    ]
    premise = check(theta, program, psi, mode, opts)

    def conclusion() -> Verdict:
        pre = apply_superop_assertion(theta, channel, on)
        post = apply_superop_assertion(psi, channel, on)
        return check(pre, program, post, mode, opts)

    return _verdict("SupOper", [premise], side, conclusion)


@_register("SupPos")
def _suppos(
    program, opts, *, p: Expr, p_post: Expr, phis: Sequence[np.ndarray],
    psis: Sequence[np.ndarray], alphas: Sequence[complex], v: Sequence[str], w: Sequence[str],
    mode="total",
) -> Verdict:
    v_layout = _register_layout(program, v)
    both = v_layout.union(_register_layout(program, w))
    d = len(phis)
    alphas = np.asarray(alphas, dtype=complex)
    dw = program.layout.dim_of(w)

    def entangled(vectors) -> np.ndarray:
        basis = np.eye(dw)
        out = sum(np.kron(np.asarray(x, dtype=complex), basis[i]) for i, x in enumerate(vectors))
        return out / np.sqrt(d)

    def proj(x: np.ndarray) -> np.ndarray:
        return np.outer(x, x.conj())

    side = [
        (_qv_stmt(program) <= set(v), "S acts outside V"),
        (not set(w) & set(v), "V and W overlap"),
        (d <= dw and len(psis) == d == len(alphas), "index register too small or lengths differ"),
        (bool(np.isclose(np.sum(np.abs(alphas) ** 2), 1.0)), "amplitudes are not normalised"),
    ]
    if not all(ok for ok, _ in side):
        return _verdict("SupPos", [], side, lambda: None)
    premise = check(
        CqAssertion.of(both, (p, proj(entangled(phis)))),
        program,
        CqAssertion.of(both, (p_post, proj(entangled(psis)))),
        mode,
        opts,
    )

    def conclusion() -> Verdict:
        a = sum(c * np.asarray(x, dtype=complex) for c, x in zip(alphas, phis))
        b = sum(c * np.asarray(x, dtype=complex) for c, x in zip(alphas, psis))
        pre = CqAssertion.of(v_layout, (p, proj(a)))
        post = CqAssertion.of(v_layout, (p_post, proj(b)))
        return check(pre, program, post, mode, opts)

    return _verdict("SupPos", [premise], side, conclusion)


@_register("L-Sum")
def _lsum(
    program, opts, *, thetas: Sequence[CqAssertion], psis: Sequence[CqAssertion],
    lambdas: Sequence[float], w: Sequence[str], mode="total",
) -> Verdict:
    w = tuple(w)
    dw = program.layout.dim_of(w)
    layout = QuantumLayout()
    for a in (*thetas, *psis):
        layout = layout.union(a.layout)
    full = layout.union(_register_layout(program, w))
    used = _qv_stmt(program) | set(layout.names)
    side = [
        (not set(w) & used, "W meets qv(S, Θ_i, Ψ_i)"),
        (len(thetas) == len(psis) == len(lambdas) <= dw, "lengths differ or W is too small"),
        (all(x >= 0 for x in lambdas) and sum(lambdas) <= 1 + 1e-12, "λ is not a sub-distribution"),
    ]
    if not all(ok for ok, _ in side):
        return _verdict("L-Sum", [], side, lambda: None)

    def indexed(parts: Sequence[CqAssertion]) -> CqAssertion:
        out = CqAssertion.bottom(full)
        for i, a in enumerate(parts):
            out = out.plus(_with_factor(a.extend(layout), np.diag(np.eye(dw)[i]), w, full))
        return out

    premise = check(indexed(thetas), program, indexed(psis), mode, opts)

    def conclusion() -> Verdict:
        pre = linear_combine_assertions([(x, a.extend(layout)) for x, a in zip(lambdas, thetas)])
        post = linear_combine_assertions([(x, a.extend(layout)) for x, a in zip(lambdas, psis)])
        return check(pre, program, post, mode, opts)

    return _verdict("L-Sum", [premise], side, conclusion)


@_register("Tens")
def _tens(
    program, opts, *, theta: CqAssertion, psi: CqAssertion, m: np.ndarray, w: Sequence[str],
    mode="total",
) -> Verdict:
    w = tuple(w)
    used = _qv_stmt(program) | _qv(theta) | _qv(psi)
    side = [(not set(w) & used, "W meets qv(S, Θ, Ψ)")]
    premise = check(theta, program, psi, mode, opts)

    def conclusion() -> Verdict:
        w_layout = _register_layout(program, w)
        pre = _with_factor(theta, m, w, theta.layout.union(w_layout))
        post = _with_factor(psi, m, w, psi.layout.union(w_layout))
        return check(pre, program, post, mode, opts)

    return _verdict("Tens", [premise], side, conclusion)


@_register("Trace")
def _trace(
    program, opts, *, theta: CqAssertion, psi: CqAssertion, v: Sequence[str], mode="total"
) -> Verdict:
    v = tuple(v)
    side = [
        (set(v) <= _qv(theta) & _qv(psi), "V is not contained in qv(Θ) ∩ qv(Ψ)"),
        (not set(v) & _qv_stmt(program), "V meets qv(S)"),
    ]
    premise = check(theta, program, psi, mode, opts)

    def reduced(a: CqAssertion) -> CqAssertion:
        rest = a.layout.subset(n for n in a.layout.names if n not in v)
        dv = a.layout.dim_of(v)
        return a.map_matrices(lambda m: partial_trace(m, v, a.layout) / dv, rest)

    return _verdict(
        "Trace", [premise], side, lambda: check(reduced(theta), program, reduced(psi), mode, opts)
    )


# ── classical connectives ────────────────────────────────────────────


@_register("Exist")
def _exist(
    program, opts, *, p: Expr, m: np.ndarray, layout: QuantumLayout, x: str, psi: CqAssertion,
    mode="total",
) -> Verdict:
    decl = next((v for v in program.cvars if v.name == x), None)
    if decl is None or decl.values is None:
        raise UnsupportedRuleError(f"∃{x} needs a declared finite range for {x!r}")
    if decl.type is VarType.BOOL:
        exists = disj(substitute(p, x, Const(False)), substitute(p, x, Const(True)))
    else:
        exists = Quant("exists", x, Const(decl.lo), Const(decl.hi), p)
    free_post = set().union(*(free_vars(t.guard) for t in psi.terms))
    side = [(x not in classical_vars(program.body) | free_post, f"{x} occurs in S or Ψ")]
    premise = check(CqAssertion.of(layout, (p, m)), program, psi, mode, opts)
    out = _verdict(
        "Exist", [premise], side,
        lambda: check(CqAssertion.of(layout, (exists, m)), program, psi, mode, opts),
    )
    out.diagnostics.append(f"∃{x} ranges over {decl.lo}..{decl.hi} only")
    return out


@_register("Inv")
def _inv(
    program, opts, *, p: Expr, theta: CqAssertion, psi: CqAssertion, mode="total"
) -> Verdict:
    side = [(not free_vars(p) & changed_vars(program.body), "S changes a variable of p")]
    premise = check(theta, program, psi, mode, opts)
    return _verdict(
        "Inv", [premise], side,
        lambda: check(theta.guarded(p), program, psi.guarded(p), mode, opts),
    )


@_register("Disj")
def _disj(
    program, opts, *, p: Expr, p2: Expr, m: np.ndarray, layout: QuantumLayout, psi: CqAssertion,
    mode="total",
) -> Verdict:
    premises = [
        check(CqAssertion.of(layout, (p, m)), program, psi, mode, opts),
        check(CqAssertion.of(layout, (p2, m)), program, psi, mode, opts),
    ]
    return _verdict(
        "Disj", premises, [],
        lambda: check(CqAssertion.of(layout, (disj(p, p2), m)), program, psi, mode, opts),
    )


@_register("Sum")
def _sum(
    program, opts, *, p: Expr, m: np.ndarray, p2: Expr, n: np.ndarray, layout: QuantumLayout,
    psi: CqAssertion, mode="total",
) -> Verdict:
    universe = opts.universe or universe_for(program)
    try:
        exclusive = not any(eval_pred(conj(p, p2), s) for s in universe)
    except EvaluationError:
        exclusive = False
    premises = [
        check(CqAssertion.of(layout, (p, m)), program, psi, mode, opts),
        check(CqAssertion.of(layout, (p2, n)), program, psi, mode, opts),
    ]
    return _verdict(
        "Sum", premises, [(exclusive, "p' does not imply ¬p")],
        lambda: check(CqAssertion.of(layout, (p, m), (p2, n)), program, psi, mode, opts),
    )


@_register("Linear")
def _linear(
    program, opts, *, thetas: Sequence[CqAssertion], psis: Sequence[CqAssertion],
    lambdas: Sequence[float], mode="total",
) -> Verdict:
    side = [
        (len(thetas) == len(psis) == len(lambdas), "lengths differ"),
        (all(x >= 0 for x in lambdas), "negative coefficient"),
        (sum(lambdas) <= 1 + 1e-12, "coefficients sum above 1"),
    ]
    premises = [check(a, program, b, mode, opts) for a, b in zip(thetas, psis)]

    def conclusion() -> Verdict:
        pre_layout = QuantumLayout()
        post_layout = QuantumLayout()
        for a in thetas:
            pre_layout = pre_layout.union(a.layout)
        for b in psis:
            post_layout = post_layout.union(b.layout)
        pre = linear_combine_assertions(
            [(x, a.extend(pre_layout)) for x, a in zip(lambdas, thetas)]
        )
        post = linear_combine_assertions(
            [(x, b.extend(post_layout)) for x, b in zip(lambdas, psis)]
        )
        return check(pre, program, post, mode, opts)

    return _verdict("Linear", premises, side, conclusion)


# ── loops and composition ────────────────────────────────────────────


@_register("C-WhileT")
def _cwhilet(
    program, opts, *, theta: CqAssertion, ranking: Expr, loop: While | None = None
) -> Verdict:
    if loop is None:
        found = loops(program)
        if not found:
            raise UnsupportedRuleError("C-WhileT needs a while loop")
        loop = found[0]
    body = program.with_body(loop.body)
    invariant = disj(*(t.guard for t in theta.terms))
    premises = [
        check(theta.guarded(loop.cond), body, theta, "total", opts),
        check_classical_ranking(program, loop, invariant, ranking, opts),
    ]
    conclusion_post = theta.guarded(neg(loop.cond))
    return _verdict(
        "C-WhileT", premises, [],
        lambda: check(theta, program.with_body(loop), conclusion_post, "total", opts),
    )


@_register("ProbComp")
def _probcomp(program, opts, **bindings: Any) -> Verdict:
    try:
        pre, verdict = probcomp_bound(program, opts=opts, **bindings)
    except PremiseError as exc:
        return Verdict(
            holds=False,
            method="rule:ProbComp",
            worst_margin=0.0,
            diagnostics=[str(exc), "conclusion not checked"],
            premises_hold=False,
        )
    verdict.method = "rule:ProbComp"
    verdict.premises_hold = True
    verdict.precondition = pre
    return verdict


def validate_rule_instance(
    rule: str, program: SourceProgram, *, opts: CheckOptions | None = None, **bindings: Any
) -> Verdict:
    """Check one instance of *rule* for statement ``program.body`` (or the bound statement)."""
    validator = _RULES.get(rule)
    if validator is None:
        raise UnsupportedRuleError(f"unknown rule {rule!r}; known rules: {', '.join(rule_names())}")
    try:
        return validator(program, opts or CheckOptions(), **bindings)
    except TypeError as exc:
        raise UnsupportedRuleError(f"bad bindings for {rule}: {exc}") from exc
    except LayoutError as exc:
        raise UnsupportedRuleError(f"{rule}: {exc}") from exc


__all__ = ["UnsupportedRuleError", "rule_names", "validate_rule_instance"]
