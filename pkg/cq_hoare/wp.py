"""Weakest (liberal) preconditions of cq-programs over guarded-term assertions.

Guards produced by substitution stay syntactic.  Before transforming, the classical states
reachable in front of each statement are explored forward from the universe.  After each
statement, terms with the same guard text are summed and terms that are false at every state
reachable there are dropped; an assertion that still grows past ``TABULATE_ABOVE`` terms is
re-expressed pointwise over those states.  When exploration exceeds ``reach_max`` states, guards
are only merged.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from cq_hoare.classical import (
    ClassicalState,
    Const,
    DistributionError,
    EvaluationError,
    Expr,
    Var,
    conj,
    disj,
    eq,
    eval_expr,
    eval_pred,
    neg,
    update,
)
from cq_hoare.config import DEFAULT_LOOP_MAX, DEFAULT_LOOP_TOL, MAX_UNIVERSE
from cq_hoare.cqmodel import (
    CqAssertion,
    LayoutError,
    Term,
    linear_combine_assertions,
    subst_assertion,
)
from cq_hoare.gates import OperatorTable
from cq_hoare.lang.desugar import desugar
from cq_hoare.lang.syntax import (
    Abort,
    Assign,
    If,
    InitQ,
    Measure,
    RandAssign,
    Seq,
    Skip,
    SourceProgram,
    Stmt,
    Unitary,
    While,
)
from cq_hoare.lang.typecheck import quantum_vars
from cq_hoare.linalg import QuantumLayout, embed
from cq_hoare.semantics import eval_dist
from cq_hoare.workers import parallel_map

logger = logging.getLogger(__name__)

TABULATE_ABOVE = 64
MODES = ("wp", "wlp")


@dataclass
class WpOptions:
    universe: Sequence[ClassicalState]
    loop_tol: float = DEFAULT_LOOP_TOL
    loop_max: int = DEFAULT_LOOP_MAX
    mode: str = "wp"
    threads: int = 1
    reach_max: int = MAX_UNIVERSE

    def __post_init__(self) -> None:
        if not self.universe:
            raise ValueError("wp needs a nonempty classical universe")
        if self.loop_tol <= 0:
            raise ValueError(f"loop_tol must be positive, got {self.loop_tol}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass
class WpResult:
    assertion: CqAssertion
    converged: bool = True
    iterations: int = 0
    approximation: str = "exact"  # exact | under | over


def point_predicate(sigma: ClassicalState) -> Expr:
    """The predicate satisfied by σ alone (over σ's variables)."""
    return conj(*(eq(Var(k), v) for k, v in sigma.items))


def _holds_somewhere(guard: Expr, universe: Sequence[ClassicalState]) -> bool:
    for sigma in universe:
        try:
            if eval_pred(guard, sigma):
                return True
        except EvaluationError:
            return True
    return False


class _Unbounded(Exception):
    """Forward exploration passed ``reach_max`` states."""


def _split_points(
    cond: Expr, states: set[ClassicalState]
) -> tuple[set[ClassicalState], set[ClassicalState]]:
    yes: set[ClassicalState] = set()
    no: set[ClassicalState] = set()
    for sigma in states:
        try:
            (yes if eval_pred(cond, sigma) else no).add(sigma)
        except EvaluationError:
            continue
    return yes, no


class Transformer:
    """wp/wlp of one program's desugared body."""

    def __init__(
        self, program: SourceProgram, opts: WpOptions, table: OperatorTable | None = None
    ) -> None:
        self.table = table or OperatorTable.for_program(program)
        self.program = desugar(program, self.table)
        self.opts = opts
        self.liberal = opts.mode == "wlp"
        self.iterations = 0
        self.converged = True
        self._embedded: dict[tuple, list[np.ndarray]] = {}
        # id(stmt) -> states reachable just before stmt; None until explored
        self._reachable: dict[int, set[ClassicalState]] | None = None
        self._ordered: dict[int, list[ClassicalState]] = {}
        self._unbounded = False
        self._layout: QuantumLayout | None = None

    def transform(self, theta: CqAssertion) -> WpResult:
        missing = quantum_vars(self.program.body) - set(theta.layout.names)
        if missing:
            raise LayoutError(
                f"postcondition over {theta.layout} misses program variables {sorted(missing)}"
            )
        self.explore(theta.layout)
        out = self.wp(self.program.body, theta)
        approx = "exact"
        if not self.converged:
            approx = "over" if self.liberal else "under"
            logger.warning(
                "%s loop iteration stopped after %d iterations (%s-approximation)",
                self.opts.mode, self.iterations, approx,
            )
        return WpResult(out, self.converged, self.iterations, approx)

    # ── reachable classical states ───────────────────────────────────

    def explore(self, layout: QuantumLayout) -> None:
        """Record the classical states reachable before each statement from the universe."""
        self._reachable = {}
        self._layout = layout
        try:
            self.reach(self.program.body, set(self.opts.universe))
        except _Unbounded:
            logger.warning(
                "more than %d reachable classical states in %s; guards are only merged",
                self.opts.reach_max, self.program.name,
            )
            self._unbounded = True
            self._reachable = {}
        self._ordered = {
            k: sorted(v, key=ClassicalState.sort_key) for k, v in self._reachable.items()
        }
        logger.debug(
            "explored %d statements, at most %d states each",
            len(self._ordered), max((len(v) for v in self._ordered.values()), default=0),
        )

    def _record(self, s: Stmt, states: set[ClassicalState]) -> None:
        seen = self._reachable.setdefault(id(s), set())
        seen |= states
        if len(seen) > self.opts.reach_max:
            raise _Unbounded

    def reach(self, s: Stmt, states: set[ClassicalState]) -> set[ClassicalState]:
        """Classical states after *s* from *states*; stuck evaluations have no successor."""
        self._record(s, states)
        match s:
            case Skip() | InitQ() | Unitary():
                return set(states)
            case Abort():
                return set()
            case Assign(target, expr):
                return self._successors(
                    states, lambda sigma: [update(sigma, target, eval_expr(expr, sigma))]
                )
            case RandAssign(target, dist):
                return self._successors(
                    states,
                    lambda sigma: [
                        update(sigma, target, v) for v, p in eval_dist(dist, sigma).atoms if p > 0
                    ],
                )
            case Measure(target, measurement, qvars):
                d = self._layout.dim_of(qvars)
                k = len(self.table.measurement(measurement, d))
                return self._successors(
                    states, lambda sigma: [update(sigma, target, i) for i in range(k)]
                )
            case Seq(stmts):
                for part in stmts:
                    states = self.reach(part, states)
                return states
            case If(cond, then, orelse):
                yes, no = _split_points(cond, states)
                return self.reach(then, yes) | self.reach(orelse, no)
            case While(cond, body):
                visited = set(states)
                frontier = set(states)
                exits: set[ClassicalState] = set()
                while frontier:
                    yes, no = _split_points(cond, frontier)
                    exits |= no
                    frontier = self.reach(body, yes) - visited
                    visited |= frontier
                    self._record(s, frontier)
                return exits
        raise TypeError(f"not a core statement: {s!r}")

    @staticmethod
    def _successors(states: set[ClassicalState], step) -> set[ClassicalState]:  # noqa: ANN001
        out: set[ClassicalState] = set()
        for sigma in states:
            try:
                out.update(step(sigma))
            except (EvaluationError, DistributionError):
                continue
        return out

    def points(self, s: Stmt) -> Sequence[ClassicalState]:
        """States at which the precondition of *s* is needed."""
        if self._reachable is None or self._unbounded:
            return self.opts.universe
        return self._ordered.get(id(s), [])

    # ── helpers ──────────────────────────────────────────────────────

    def top(self, theta: CqAssertion) -> CqAssertion:
        return CqAssertion.top(theta.layout)

    def merge(self, theta: CqAssertion) -> CqAssertion:
        """Sum terms with the same guard text and drop zero terms."""
        merged: dict[str, Term] = {}
        for t in theta.terms:
            if t.key in merged:
                merged[t.key] = Term(t.guard, merged[t.key].matrix + t.matrix)
            else:
                merged[t.key] = t
        terms = tuple(t for t in merged.values() if np.any(np.abs(t.matrix) > 0.0))
        return CqAssertion(theta.layout, terms)

    def compact(
        self, theta: CqAssertion, points: Sequence[ClassicalState] | None = None
    ) -> CqAssertion:
        """Merge, then drop terms false at every point (the universe by default)."""
        points = self.opts.universe if points is None else points
        out = self.merge(theta)
        out = CqAssertion(
            out.layout, tuple(t for t in out.terms if _holds_somewhere(t.guard, points))
        )
        if len(out.terms) > TABULATE_ABOVE:
            out = self.tabulate(out, points)
        return out

    def simplify(self, s: Stmt, theta: CqAssertion) -> CqAssertion:
        """Compact the precondition of *s* against the states reachable before it."""
        if self._unbounded:
            return self.merge(theta)
        return self.compact(theta, self.points(s))

    def tabulate(
        self, theta: CqAssertion, points: Sequence[ClassicalState] | None = None
    ) -> CqAssertion:
        """Pointwise form: one term per distinct matrix, guarded by the points where it occurs."""
        points = self.opts.universe if points is None else points
        groups: dict[bytes, tuple[np.ndarray, list[ClassicalState]]] = {}
        values = parallel_map(theta.evaluate, points, self.opts.threads)
        for sigma, m in zip(points, values):
            if not np.any(np.abs(m) > 0.0):
                continue
            key = np.round(m, 12).tobytes()
            groups.setdefault(key, (m, []))[1].append(sigma)
        terms = tuple(
            Term(disj(*(point_predicate(s) for s in pts)), m) for m, pts in groups.values()
        )
        logger.debug("tabulated %d terms into %d", len(theta.terms), len(terms))
        return CqAssertion(theta.layout, terms)

    def kraus(self, key: tuple, ops, qvars, theta: CqAssertion) -> list[np.ndarray]:
        cache_key = (key, tuple(qvars), theta.layout)
        if cache_key not in self._embedded:
            self._embedded[cache_key] = [embed(op, qvars, theta.layout) for op in ops]
        return self._embedded[cache_key]

    # ── transformer ──────────────────────────────────────────────────

    def wp(self, s: Stmt, theta: CqAssertion) -> CqAssertion:
        match s:
            case Skip():
                return theta
            case Abort():
                return self.top(theta) if self.liberal else CqAssertion.bottom(theta.layout)
            case Assign(target, expr):
                return self.simplify(s, subst_assertion(theta, target, expr))
            case RandAssign(target, dist):
                if dist.kind == "point":
                    return self.simplify(s, subst_assertion(theta, target, dist.args[0]))
                g = eval_dist(dist, ClassicalState())
                parts = [(p, subst_assertion(theta, target, Const(v))) for v, p in g.atoms]
                if self.liberal and g.total < 1.0:
                    parts.append((1.0 - g.total, self.top(theta)))
                if not parts:
                    return CqAssertion.bottom(theta.layout)
                return self.simplify(s, linear_combine_assertions(parts))
            case Measure(target, measurement, qvars):
                d = theta.layout.dim_of(qvars)
                ops = self.kraus(
                    ("measure", measurement), self.table.measurement(measurement, d), qvars, theta
                )
                parts = []
                for i, e in enumerate(ops):
                    branch = subst_assertion(theta, target, Const(i))
                    parts.append(branch.map_matrices(lambda m, e=e: e.conj().T @ m @ e))
                return self.simplify(s, parts[0].plus(*parts[1:]))
            case InitQ(qvar):
                d = theta.layout.dim_of([qvar])
                ops = []
                for i in range(d):
                    op = np.zeros((d, d), dtype=complex)
                    op[0, i] = 1.0
                    ops.append(op)
                es = self.kraus(("init", d), ops, [qvar], theta)
                return theta.map_matrices(lambda m: sum(e.conj().T @ m @ e for e in es))
            case Unitary(qvars, ref):
                (u,) = self.kraus(("unitary", ref), [self.table.unitary(ref)], qvars, theta)
                return theta.map_matrices(lambda m: u.conj().T @ m @ u)
            case Seq(stmts):
                for part in reversed(stmts):
                    theta = self.wp(part, theta)
                return theta
            case If(cond, then, orelse):
                yes = self.wp(then, theta).guarded(cond)
                no = self.wp(orelse, theta).guarded(neg(cond))
                return self.simplify(s, yes.plus(no))
            case While():
                return self.loop(s, theta)
        raise TypeError(f"not a core statement: {s!r}")

    def loop(self, s: While, theta: CqAssertion) -> CqAssertion:
        """Iterate ``Θ_{n+1} = ¬b ∧ Θ + b ∧ xp.S.Θ_n`` from ⊥ (wp) or ⊤ (wlp)."""
        cond, body = s.cond, s.body
        exit_part = theta.guarded(neg(cond))
        current = self.top(theta) if self.liberal else CqAssertion.bottom(theta.layout)
        head = self.points(s)
        before = [current.evaluate(p) for p in head]
        for n in range(1, self.opts.loop_max + 1):
            nxt = self.simplify(s, exit_part.plus(self.wp(body, current).guarded(cond)))
            after = parallel_map(nxt.evaluate, head, self.opts.threads)
            delta = max(
                (float(np.max(np.abs(a - b), initial=0.0)) for a, b in zip(after, before)),
                default=0.0,
            )
            self.iterations += 1
            logger.debug("%s loop iteration %d: change %.3g", self.opts.mode, n, delta)
            current, before = nxt, after
            if delta < self.opts.loop_tol:
                return current
        self.converged = False
        return current


def transform(program: SourceProgram, theta: CqAssertion, opts: WpOptions) -> WpResult:
    """wp (or wlp, per ``opts.mode``) of *program* for postcondition *theta*."""
    return Transformer(program, opts).transform(theta)


__all__ = ["MODES", "Transformer", "WpOptions", "WpResult", "point_predicate", "transform"]
