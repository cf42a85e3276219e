"""Operational (small-step, breadth-first) and denotational semantics of cq-programs.

Both semantics share the atomic actions in :meth:`Interpreter.atomic`, which map one branch
``<σ, block>`` to its successor branches.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from cq_hoare.classical import (
    ClassicalState,
    Distribution,
    DistributionError,
    EvaluationError,
    Value,
    VarType,
    eval_expr,
    eval_pred,
    update,
)
from cq_hoare.config import DEFAULT_LOOP_MAX, DEFAULT_LOOP_TOL, DEFAULT_MAX_STEPS
from cq_hoare.cqmodel import CqState, LayoutError, state_distance
from cq_hoare.gates import OperatorError, OperatorTable
from cq_hoare.lang.desugar import desugar
from cq_hoare.lang.syntax import (
    COMPUTATIONAL,
    Abort,
    Assign,
    DistExpr,
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
    seq,
)
from cq_hoare.lang.typecheck import quantum_vars
from cq_hoare.linalg import (
    Ensemble,
    KrausChannel,
    LinalgError,
    QuantumLayout,
    StateVector,
    apply_channel,
    apply_on,
    compress,
    ensemble_mass,
    measure_basis,
)
from cq_hoare.workers import parallel_map

logger = logging.getLogger(__name__)

CYCLE_WINDOW = 16

Branch = tuple[ClassicalState, Ensemble]


class StuckError(ValueError):
    """An expression could not be evaluated while executing a configuration."""

    def __init__(self, message: str, configuration: Configuration | None = None) -> None:
        self.configuration = configuration
        where = f" at {configuration.sigma}" if configuration is not None else ""
        super().__init__(f"{message}{where}")


@dataclass(frozen=True, eq=False)
class Configuration:
    """``<S, σ, ρ>``; ``remaining`` is None for the termination marker E."""

    remaining: Stmt | None
    sigma: ClassicalState
    block: Ensemble

    @property
    def terminated(self) -> bool:
        return self.remaining is None

    @property
    def mass(self) -> float:
        return ensemble_mass(self.block)


@dataclass
class RunResult:
    terminated: CqState
    terminated_mass: float
    residual_mass: float
    step_bound_hit: bool
    branch_count: int
    aborted_mass: float = 0.0
    running_mass: float = 0.0
    pruned_mass: float = 0.0
    steps: int = 0


@dataclass
class DenoteResult:
    state: CqState
    converged: bool = True
    iterations: int = 0
    residual_mass: float = 0.0


def eval_dist(dist: DistExpr, sigma: ClassicalState) -> Distribution:
    """The finite distribution denoted by *dist* at σ."""
    if dist.kind == "unif":
        lo, hi = (eval_expr(a, sigma) for a in dist.args)
        return Distribution.uniform(lo, hi)
    if dist.kind == "point":
        return Distribution.point(eval_expr(dist.args[0], sigma))
    values = [eval_expr(v, sigma) for v in dist.args]
    return Distribution.from_pairs(zip(values, dist.probs))


def initial_state(
    program: SourceProgram,
    sigma: ClassicalState | Mapping[str, Value] | None = None,
    vector: np.ndarray | None = None,
) -> CqState:
    """``<σ0, |v><v|>``; unset variables start at their range minimum (0, false), qvars at |0>."""
    values: dict[str, Value] = {}
    for v in program.cvars:
        if v.type is VarType.BOOL:
            values[v.name] = False
        else:
            values[v.name] = v.lo if v.lo is not None else 0
    if sigma is not None:
        values.update(sigma.as_dict() if isinstance(sigma, ClassicalState) else sigma)
    layout = program.layout
    if vector is None:
        vector = np.zeros(layout.dim, dtype=complex)
        vector[0] = 1.0
    return CqState.point(ClassicalState.of(values), layout, vector)


def outcome_distribution(state: CqState, names: Sequence[str]) -> dict[tuple[Value, ...], float]:
    """Marginal mass of the classical variables *names*, keys in ascending order."""
    acc: dict[tuple[Value, ...], float] = {}
    for sigma, block in state.branches:
        key = tuple(sigma.get(n) for n in names)
        acc[key] = acc.get(key, 0.0) + ensemble_mass(block)
    return dict(sorted(acc.items(), key=lambda kv: tuple((v is None, int(v or 0)) for v in kv[0])))


class Interpreter:
    """Executes the desugared body of one program over states of a given layout."""

    def __init__(
        self,
        program: SourceProgram,
        layout: QuantumLayout | None = None,
        table: OperatorTable | None = None,
        threads: int = 1,
    ) -> None:
        self.table = table or OperatorTable.for_program(program)
        self.program = desugar(program, self.table)
        self.layout = layout or program.layout
        self.types = program.types
        self.threads = threads
        missing = quantum_vars(self.program.body) - set(self.layout.names)
        if missing:
            raise LayoutError(f"program uses quantum variables {sorted(missing)} not in the state")

    # ── atomic actions ───────────────────────────────────────────────

    def atomic(self, s: Stmt, sigma: ClassicalState, block: Ensemble) -> list[Branch]:
        """Successor branches of a statement that finishes in one step."""
        match s:
            case Skip():
                return [(sigma, block)]
            case Abort():
                return []
            case Assign(target, expr):
                return [(update(sigma, target, eval_expr(expr, sigma), self.types), block)]
            case RandAssign(target, dist):
                out = []
                for value, p in eval_dist(dist, sigma).atoms:
                    if p > 0:
                        out.append(
                            (update(sigma, target, value, self.types), _scale(block, p))
                        )
                return out
            case Measure(target, measurement, qvars):
                return [
                    (update(sigma, target, i, self.types), branch)
                    for i, branch in self.measure(measurement, qvars, block)
                ]
            case InitQ(qvar):
                d = self.layout.dim_of([qvar])
                ops = []
                for i in range(d):
                    op = np.zeros((d, d), dtype=complex)
                    op[0, i] = 1.0
                    ops.append(op)
                out_block = apply_channel(KrausChannel(tuple(ops)), block, [qvar], self.layout)
                return [(sigma, compress(out_block, self.layout.dim))]
            case Unitary(qvars, ref):
                op = self.table.unitary(ref)
                moved = []
                for v in block:
                    w = StateVector.from_unnormalised(
                        apply_on(v.amplitudes, op, qvars, self.layout), v.weight
                    )
                    if w is not None:
                        moved.append(w)
                return [(sigma, tuple(moved))]
        raise TypeError(f"not an atomic statement: {s!r}")

    def measure(
        self, name: str, qvars: tuple[str, ...], block: Ensemble
    ) -> list[tuple[int, Ensemble]]:
        if name == COMPUTATIONAL:
            return measure_basis(block, qvars, self.layout)
        ops = self.table.measurement(name, self.layout.dim_of(qvars))
        out = []
        for i, op in enumerate(ops):
            branch = apply_channel(KrausChannel((op,)), block, qvars, self.layout)
            if branch:
                out.append((i, branch))
        return out

    # ── small-step ───────────────────────────────────────────────────

    def step(self, c: Configuration) -> list[Configuration]:
        """Successors of a configuration under the transition rules."""
        if c.remaining is None:
            raise ValueError("a terminated configuration has no successors")
        try:
            return self._step(c.remaining, c.sigma, c.block)
        except (EvaluationError, DistributionError, OperatorError, LinalgError) as exc:
            raise StuckError(str(exc), c) from exc

    def _step(self, s: Stmt, sigma: ClassicalState, block: Ensemble) -> list[Configuration]:
        match s:
            case Seq(stmts):
                out = []
                for nxt in self._step(stmts[0], sigma, block):
                    rest = stmts[1:] if nxt.remaining is None else (nxt.remaining, *stmts[1:])
                    out.append(Configuration(seq(*rest), nxt.sigma, nxt.block))
                return out
            case If(cond, then, orelse):
                return [Configuration(then if eval_pred(cond, sigma) else orelse, sigma, block)]
            case While(cond, body):
                if eval_pred(cond, sigma):
                    return [Configuration(seq(body, s), sigma, block)]
                return [Configuration(None, sigma, block)]
        return [
            Configuration(None, s2, b2)
            for s2, b2 in self.atomic(s, sigma, block)
            if ensemble_mass(b2) > 0
        ]

    def run(
        self, delta: CqState, max_steps: int = DEFAULT_MAX_STEPS, prune: float = 0.0
    ) -> RunResult:
        """Breadth-first exploration of all computations, up to *max_steps* levels."""
        self._check_layout(delta)
        frontier = [Configuration(self.program.body, s, b) for s, b in delta.branches]
        terminated: dict[ClassicalState, list[StateVector]] = {}
        aborted = pruned = 0.0
        explored = steps = 0
        while frontier and steps < max_steps:
            steps += 1
            explored += len(frontier)
            successors = parallel_map(self.step, frontier, self.threads)
            merged: dict[tuple[Stmt, ClassicalState], list[StateVector]] = {}
            for c, nxt in zip(frontier, successors):
                aborted += max(0.0, c.mass - sum(n.mass for n in nxt))
                for n in nxt:
                    if n.remaining is None:
                        terminated.setdefault(n.sigma, []).extend(n.block)
                    else:
                        merged.setdefault((n.remaining, n.sigma), []).extend(n.block)
            frontier = []
            for (rem, sigma), vectors in merged.items():
                block = compress(tuple(vectors), self.layout.dim)
                mass = ensemble_mass(block)
                if 0 < prune and mass < prune:
                    pruned += mass
                    continue
                frontier.append(Configuration(rem, sigma, block))
            logger.debug(
                "step %d: %d running branches, terminated mass %.12g",
                steps, len(frontier), sum(ensemble_mass(v) for v in terminated.values()),
            )
        state = CqState.from_map(self.layout, terminated)
        running = float(sum(c.mass for c in frontier))
        hit = bool(frontier)
        if hit:
            logger.warning("step bound %d reached with mass %.6g still running", max_steps, running)
        if pruned > 0:
            logger.warning("pruning discarded mass %.6g", pruned)
        logger.info("run finished after %d steps: terminated mass %.12g", steps, state.trace)
        return RunResult(
            terminated=state,
            terminated_mass=state.trace,
            residual_mass=aborted + running + pruned,
            step_bound_hit=hit,
            branch_count=explored,
            aborted_mass=aborted,
            running_mass=running,
            pruned_mass=pruned,
            steps=steps,
        )

    # ── denotational ─────────────────────────────────────────────────

    def denote(
        self, delta: CqState, loop_tol: float = DEFAULT_LOOP_TOL, loop_max: int = DEFAULT_LOOP_MAX
    ) -> DenoteResult:
        self._check_layout(delta)
        self._loop_tol, self._loop_max = loop_tol, loop_max
        result = DenoteResult(delta)
        try:
            result.state = self._denote(self.program.body, delta, result)
        except (EvaluationError, DistributionError, OperatorError, LinalgError) as exc:
            raise StuckError(str(exc)) from exc
        if not result.converged:
            logger.warning(
                "loop iteration did not converge after %d iterations (residual %.3g)",
                result.iterations, result.residual_mass,
            )
        return result

    def _denote(self, s: Stmt, delta: CqState, acc: DenoteResult) -> CqState:
        match s:
            case Seq(stmts):
                for part in stmts:
                    delta = self._denote(part, delta, acc)
                return delta
            case If(cond, then, orelse):
                yes, no = _split(delta, cond)
                return self._denote(then, yes, acc).merge(self._denote(orelse, no, acc))
            case While(cond, body):
                return self._denote_loop(cond, body, delta, acc)
        out: dict[ClassicalState, list[StateVector]] = {}
        for sigma, block in delta.branches:
            for s2, b2 in self.atomic(s, sigma, block):
                out.setdefault(s2, []).extend(b2)
        return CqState.from_map(delta.layout, out)

    def _denote_loop(self, cond, body: Stmt, delta: CqState, acc: DenoteResult) -> CqState:
        """Iterate ``exit += cur|¬b; cur = [[body]](cur|b)`` until no mass is left in the loop.

        A loop whose inside state revisits an earlier one while no mass exits in between never
        terminates from there; that mass is reported as residual.
        """
        exited = CqState.bottom(delta.layout)
        cur = delta
        # inside states since the last iteration that let mass exit
        since_exit: list[CqState] = []
        for _ in range(self._loop_max):
            inside, outside = _split(cur, cond)
            exited = exited.merge(outside)
            if inside.trace < self._loop_tol:
                acc.residual_mass += inside.trace
                return exited
            if outside.trace > 0:
                since_exit.clear()
            nxt = self._denote(body, inside, acc)
            acc.iterations += 1
            since_exit.append(cur)
            if len(since_exit) > CYCLE_WINDOW:
                since_exit.pop(0)
            if any(_same_state(nxt, seen) for seen in reversed(since_exit)):
                logger.debug(
                    "loop state repeats within %d iterations holding mass %.6g",
                    len(since_exit), nxt.trace,
                )
                acc.residual_mass += nxt.trace
                return exited
            cur = nxt
        acc.converged = False
        acc.residual_mass += cur.trace
        return exited

    def _check_layout(self, delta: CqState) -> None:
        if delta.layout != self.layout:
            raise LayoutError(f"state over {delta.layout}, interpreter over {self.layout}")


def _split(delta: CqState, cond) -> tuple[CqState, CqState]:
    yes, no = [], []
    for sigma, block in delta.branches:
        (yes if eval_pred(cond, sigma) else no).append((sigma, block))
    return CqState(delta.layout, tuple(yes)), CqState(delta.layout, tuple(no))


def _same_state(a: CqState, b: CqState) -> bool:
    if set(a.support) != set(b.support):
        return False
    return state_distance(a, b) < 1e-14


def _scale(block: Ensemble, p: float) -> Ensemble:
    return tuple(v.scaled(p) for v in block)


# ── Module-level entry points ────────────────────────────────────────


def step(program: SourceProgram, c: Configuration, layout: QuantumLayout | None = None):
    return Interpreter(program, layout).step(c)


def run(
    program: SourceProgram,
    delta: CqState,
    max_steps: int = DEFAULT_MAX_STEPS,
    prune: float = 0.0,
    threads: int = 1,
) -> RunResult:
    return Interpreter(program, delta.layout, threads=threads).run(delta, max_steps, prune)


def denote(
    program: SourceProgram,
    delta: CqState,
    loop_tol: float = DEFAULT_LOOP_TOL,
    loop_max: int = DEFAULT_LOOP_MAX,
) -> DenoteResult:
    return Interpreter(program, delta.layout).denote(delta, loop_tol, loop_max)


__all__ = [
    "Configuration",
    "DenoteResult",
    "Interpreter",
    "RunResult",
    "StuckError",
    "denote",
    "eval_dist",
    "initial_state",
    "outcome_distribution",
    "run",
    "step",
]
