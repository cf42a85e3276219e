"""Checking correctness formulas ``{Θ} S {Ψ}`` for total and partial correctness.

``check`` compares the precondition with wp/wlp of the postcondition over a finite classical
universe.  ``check_semantic`` samples simple input states and compares expectations directly;
it can refute a triple but never proves one.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from cq_hoare.classical import (
    ClassicalState,
    EvaluationError,
    Expr,
    Value,
    conj,
    eval_expr,
    eval_pred,
    product_states,
)
from cq_hoare.config import (
    DEFAULT_HOARE_TOL,
    DEFAULT_LOOP_MAX,
    DEFAULT_LOOP_TOL,
    DEFAULT_MAX_STEPS,
    DEFAULT_SAMPLES,
    MAX_UNIVERSE,
)
from cq_hoare.cqmodel import CqAssertion, CqState, assertion_leq, expectation
from cq_hoare.lang.syntax import SourceProgram, Stmt, While, seq, walk
from cq_hoare.lang.typecheck import quantum_vars
from cq_hoare.linalg import QuantumLayout, RandomSource, StateVector
from cq_hoare.semantics import Interpreter, StuckError, initial_state
from cq_hoare.workers import parallel_map
from cq_hoare.wp import Transformer, WpOptions

logger = logging.getLogger(__name__)

MODES = ("total", "partial")


class UniverseError(ValueError):
    """No finite classical universe is available for a check."""


class PremiseError(ValueError):
    """A premise of a composed rule does not hold."""


@dataclass
class Verdict:
    holds: bool
    method: str
    worst_margin: float
    witness: ClassicalState | None = None
    direction: np.ndarray | None = None
    diagnostics: list[str] = field(default_factory=list)
    iterations: int = 0
    converged: bool = True
    precondition: CqAssertion | None = None
    premises_hold: bool | None = None

    @property
    def counterexample(self) -> bool:
        """Premises verified but the conclusion refuted."""
        return bool(self.premises_hold) and not self.holds


@dataclass
class CheckOptions:
    universe: Sequence[ClassicalState] | None = None
    tol: float = DEFAULT_HOARE_TOL
    loop_tol: float = DEFAULT_LOOP_TOL
    loop_max: int = DEFAULT_LOOP_MAX
    max_steps: int = DEFAULT_MAX_STEPS
    samples: int = DEFAULT_SAMPLES
    seed: int = 0
    threads: int = 1


def universe_for(
    program: SourceProgram,
    extra: Mapping[str, Sequence[Value]] | None = None,
    max_points: int = MAX_UNIVERSE,
) -> list[ClassicalState]:
    """Cartesian product of the declared ranges (booleans over false, true)."""
    domains: dict[str, Sequence[Value]] = {}
    for v in program.cvars:
        values = v.values
        if values is None and (extra is None or v.name not in extra):
            raise UniverseError(f"variable {v.name!r} has no declared range")
        domains[v.name] = values
    domains.update(extra or {})
    size = math.prod(len(d) for d in domains.values())
    if size > max_points:
        raise UniverseError(f"universe of {size} points exceeds the limit of {max_points}")
    return product_states(domains)


def _universe(program: SourceProgram, opts: CheckOptions) -> list[ClassicalState]:
    if opts.universe is not None:
        if not opts.universe:
            raise UniverseError("the supplied universe is empty")
        return list(opts.universe)
    return universe_for(program)


def loops(program: SourceProgram) -> list[While]:
    """The while statements of the body, in pre-order."""
    return [s for s in walk(program.body) if isinstance(s, While)]


def postcondition_layout(program: SourceProgram, post: CqAssertion) -> QuantumLayout:
    """``qv(Ψ) ∪ qv(S)``, in the program's declaration order for the added variables."""
    used = quantum_vars(program.body, program.registers)
    return post.layout.union(program.layout.subset(used))


def combine(method: str, verdicts: Sequence[Verdict], diagnostics: Sequence[str] = ()) -> Verdict:
    """Conjunction of verdicts; the worst margin and its witness win."""
    worst = min(verdicts, key=lambda v: v.worst_margin)
    notes = list(diagnostics)
    for v in verdicts:
        notes.extend(v.diagnostics)
    return Verdict(
        holds=all(v.holds for v in verdicts),
        method=method,
        worst_margin=worst.worst_margin,
        witness=worst.witness,
        direction=worst.direction,
        diagnostics=notes,
        iterations=sum(v.iterations for v in verdicts),
        converged=all(v.converged for v in verdicts),
    )


# ── wp-based checking ────────────────────────────────────────────────


def precondition(
    program: SourceProgram, post: CqAssertion, mode: str = "total", opts: CheckOptions | None = None
):
    """wp (total) or wlp (partial) of *post* after tensoring identities over qv(S)."""
    opts = opts or CheckOptions()
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    universe = _universe(program, opts)
    wp_opts = WpOptions(
        universe=universe,
        loop_tol=opts.loop_tol,
        loop_max=opts.loop_max,
        mode="wp" if mode == "total" else "wlp",
        threads=opts.threads,
    )
    extended = post.extend(postcondition_layout(program, post))
    return Transformer(program, wp_opts).transform(extended), universe


def check(
    pre: CqAssertion,
    program: SourceProgram,
    post: CqAssertion,
    mode: str = "total",
    opts: CheckOptions | None = None,
) -> Verdict:
    """``Θ ≲ wp.S.(Ψ ⊗ I)`` (total) or ``Θ ≲ wlp.S.(Ψ ⊗ I)`` (partial) over the universe."""
    opts = opts or CheckOptions()
    result, universe = precondition(program, post, mode, opts)
    leq = assertion_leq(pre, result.assertion, universe, opts.tol, opts.threads)
    method = "wp-compare" if mode == "total" else "wlp-compare"
    diagnostics = []
    if not result.converged:
        diagnostics.append(
            f"loop iteration truncated after {result.iterations} iterations "
            f"({result.approximation}-approximation)"
        )
    holds = leq.holds and result.converged
    logger.info(
        "%s check of %s: %s (margin %.3g)",
        mode, program.name, "holds" if holds else "refuted", leq.worst_margin,
    )
    return Verdict(
        holds=holds,
        method=method,
        worst_margin=leq.worst_margin,
        witness=None if leq.holds else leq.witness,
        direction=None if leq.holds else leq.direction,
        diagnostics=diagnostics,
        iterations=result.iterations,
        converged=result.converged,
        precondition=result.assertion,
    )


# ── sampling ─────────────────────────────────────────────────────────


def _sample_states(
    layout: QuantumLayout, universe: Sequence[ClassicalState], count: int, seed: int
) -> list[CqState]:
    rs = RandomSource(seed)
    out = []
    for k in range(count):
        sigma = universe[int(rs.rng.integers(len(universe)))]
        if k % 2 == 0:
            block = (StateVector(rs.pure(layout.dim)),)
        else:
            block = rs.mixture(layout.dim, rank=int(rs.rng.integers(1, min(layout.dim, 4) + 1)))
        out.append(CqState.from_map(layout, {sigma: block}))
    return out


def check_semantic(
    pre: CqAssertion,
    program: SourceProgram,
    post: CqAssertion,
    mode: str = "total",
    opts: CheckOptions | None = None,
    states: Sequence[CqState] = (),
) -> Verdict:
    """Refute the triple on sampled simple states ``<σ, ρ>`` (plus any given *states*)."""
    opts = opts or CheckOptions()
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    layout = program.layout.union(pre.layout).union(post.layout)
    try:
        universe = _universe(program, opts)
    except UniverseError:
        universe = list(initial_state(program).support)
    inputs = [s.extend(layout) for s in states]
    inputs += _sample_states(layout, universe, opts.samples, opts.seed)
    machine = Interpreter(program, layout)

    def slack(delta: CqState) -> tuple[float, bool]:
        out = machine.denote(delta, opts.loop_tol, opts.loop_max)
        rhs = expectation(out.state, post)
        if mode == "partial":
            rhs += delta.trace - out.state.trace
        return rhs - expectation(delta, pre), out.converged

    results = parallel_map(slack, inputs, opts.threads)
    worst_idx = min(range(len(results)), key=lambda i: results[i][0])
    worst = results[worst_idx][0]
    diagnostics = [f"{len(inputs)} simple states sampled (seed {opts.seed})"]
    if not all(c for _, c in results):
        diagnostics.append("denotation of a loop was truncated on some samples")
    holds = worst >= -opts.tol
    return Verdict(
        holds=holds,
        method="semantic-sample",
        worst_margin=worst,
        witness=None if holds else inputs[worst_idx].support[0],
        diagnostics=diagnostics,
        converged=all(c for _, c in results),
    )


# ── termination ──────────────────────────────────────────────────────


def _maximally_mixed(sigma: ClassicalState, layout: QuantumLayout) -> CqState:
    d = layout.dim
    block = tuple(StateVector.basis(i, d, 1.0 / d) for i in range(d))
    return CqState(layout, ((sigma, block),))


def check_classical_ranking(
    program: SourceProgram,
    loop: While,
    invariant: Expr,
    ranking: Expr,
    opts: CheckOptions | None = None,
) -> Verdict:
    """Classical ranking certificate: ``p → t ≥ 0`` and ``{b ∧ p ∧ t = z} S {t < z}``."""
    opts = opts or CheckOptions()
    universe = _universe(program, opts)
    machine = Interpreter(program.with_body(loop.body), program.layout)
    guard = conj(loop.cond, invariant)

    def inspect(sigma: ClassicalState) -> tuple[float, str | None, int]:
        try:
            if not eval_pred(invariant, sigma):
                return (0.0, None, 0)
            t = eval_expr(ranking, sigma)
            if t < 0:
                return (float(t), f"ranking {t} is negative at {sigma}", t)
            if not eval_pred(guard, sigma):
                return (float(t), None, t)
        except EvaluationError as exc:
            return (-1.0, f"{exc} at {sigma}", 0)
        try:
            result = machine.run(_maximally_mixed(sigma, program.layout), opts.max_steps)
        except (StuckError, EvaluationError) as exc:
            return (-1.0, f"loop body is stuck from {sigma}: {exc}", t)
        if result.step_bound_hit:
            return (-1.0, f"loop body does not terminate from {sigma}", t)
        worst, note = float(t), None
        for after in result.terminated.support:
            try:
                t2 = eval_expr(ranking, after)
                slack = t - t2 - 1
                if slack < worst:
                    worst = float(slack)
                    if slack < 0:
                        note = f"ranking does not decrease from {sigma} to {after}"
                if eval_pred(loop.cond, after) and not eval_pred(invariant, after):
                    worst, note = min(worst, -1.0), f"invariant fails after {sigma} -> {after}"
            except EvaluationError as exc:
                worst, note = -1.0, f"{exc} at {after}"
        return (worst, note, t)

    results = parallel_map(inspect, universe, opts.threads)
    worst_idx = min(range(len(results)), key=lambda i: results[i][0])
    worst, note, _ = results[worst_idx]
    holds = worst >= -opts.tol
    diagnostics = [note] if note else []
    if holds:
        bound = max((t for _, _, t in results), default=0)
        diagnostics.append(f"terminates within {bound} iterations from invariant states")
    return Verdict(
        holds=holds,
        method="classical-ranking",
        worst_margin=worst,
        witness=None if holds else universe[worst_idx],
        diagnostics=diagnostics,
    )


def check_ranking_sequence(
    program: SourceProgram,
    loop: While,
    theta: CqAssertion,
    sequence: Sequence[CqAssertion],
    opts: CheckOptions | None = None,
) -> Verdict:
    """Validate a finite prefix of Θ-ranking assertions; termination needs it to reach ⊥."""
    opts = opts or CheckOptions()
    if not sequence:
        raise ValueError("a ranking sequence needs at least one assertion")
    universe = _universe(program, opts)
    body = program.with_body(loop.body)
    layout = theta.layout
    for s in sequence:
        layout = layout.union(s.layout)
    layout = postcondition_layout(body, CqAssertion.bottom(layout))
    theta = theta.extend(layout)
    seq_ext = [s.extend(layout) for s in sequence]
    wp_opts = WpOptions(universe, opts.loop_tol, opts.loop_max, "wp", opts.threads)

    def leq(a: CqAssertion, b: CqAssertion, what: str) -> Verdict:
        r = assertion_leq(a, b, universe, opts.tol, opts.threads)
        return Verdict(r.holds, what, r.worst_margin, None if r.holds else r.witness,
                       None if r.holds else r.direction, [] if r.holds else [f"{what} fails"])

    parts = [leq(theta, seq_ext[0], "Θ ⊑ Θ_0")]
    for n in range(len(seq_ext) - 1):
        parts.append(leq(seq_ext[n + 1], seq_ext[n], f"Θ_{n + 1} ⊑ Θ_{n}"))
        step = Transformer(body, wp_opts).transform(seq_ext[n]).assertion.guarded(loop.cond)
        parts.append(leq(step, seq_ext[n + 1], f"b ∧ wp.S.Θ_{n} ⊑ Θ_{n + 1}"))
    verdict = combine("ranking-sequence", parts)
    last = seq_ext[-1]
    reaches_bottom = all(not np.any(np.abs(last.evaluate(s)) > opts.tol) for s in universe)
    if not reaches_bottom:
        verdict.holds = False
        verdict.diagnostics.append("prefix does not reach ⊥; termination not certified")
    return verdict


# ── composition ──────────────────────────────────────────────────────


def probcomp_bound(
    program: SourceProgram,
    p_prime: Expr,
    s1: Stmt,
    p: Expr,
    psi: np.ndarray,
    qvars: Sequence[str],
    m: np.ndarray,
    s2: Stmt,
    post: CqAssertion,
    opts: CheckOptions | None = None,
) -> tuple[CqAssertion, Verdict]:
    """Compose ``{p'} S1 {<p, |ψ><ψ|>}`` and ``{<p, M>} S2 {Ψ}`` into ``{<ψ|M|ψ>·p'} S1;S2 {Ψ}``."""
    opts = opts or CheckOptions()
    layout = program.layout.subset(qvars)
    if list(layout.names) != list(qvars):
        layout = QuantumLayout(tuple((q, program.layout.dim_of([q])) for q in qvars))
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    first = check(
        CqAssertion.of(QuantumLayout(), (p_prime, 1.0)),
        program.with_body(s1),
        CqAssertion.of(layout, (p, np.outer(psi, psi.conj()))),
        "total",
        opts,
    )
    if not first.holds:
        raise PremiseError(f"first premise fails (margin {first.worst_margin:.3g})")
    second = check(CqAssertion.of(layout, (p, m)), program.with_body(s2), post, "total", opts)
    if not second.holds:
        raise PremiseError(f"second premise fails (margin {second.worst_margin:.3g})")
    scalar = float(np.real(np.vdot(psi, np.asarray(m, dtype=complex) @ psi)))
    pre = CqAssertion.of(QuantumLayout(), (p_prime, scalar))
    conclusion = check(pre, program.with_body(seq(s1, s2)), post, "total", opts)
    return pre, combine("probcomp", [first, second, conclusion], [f"<ψ|M|ψ> = {scalar:.12g}"])


__all__ = [
    "MODES",
    "CheckOptions",
    "PremiseError",
    "UniverseError",
    "Verdict",
    "check",
    "check_classical_ranking",
    "check_ranking_sequence",
    "check_semantic",
    "combine",
    "loops",
    "precondition",
    "probcomp_bound",
    "universe_for",
]
