"""Classical-quantum states and assertions.

A cq-state maps classical states σ to quantum blocks (vector ensembles over a fixed
:class:`~cq_hoare.linalg.QuantumLayout`).  A cq-assertion is a sequence of guarded terms
``<p, M>``; its value at σ is the *sum* of the matrices whose guard holds at σ.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from cq_hoare.classical import (
    FALSE,
    TRUE,
    ClassicalState,
    Expr,
    VarType,
    conj,
    eval_expr,
    eval_pred,
    format_expr,
    substitute,
    update,
)
from cq_hoare.linalg import (
    NORM_TOL,
    Ensemble,
    KrausChannel,
    LinalgError,
    QuantumLayout,
    StateVector,
    apply_channel,
    as_dense,
    compress,
    densify,
    embed,
    ensemble_from_density,
    ensemble_mass,
    expectation_on,
    is_hermitian,
    psd_margin,
)
from cq_hoare.workers import parallel_map

logger = logging.getLogger(__name__)

# Assertions on larger spaces skip the eigenvalue bound check at evaluation sites.
DENSE_CHECK_LIMIT = 256


class LayoutError(ValueError):
    """Quantum variables of an assertion are not covered by the state or channel."""


class MalformedAssertionError(ValueError):
    """A guarded-term sum falls outside ``0 ⊑ Θ(σ) ⊑ I`` or has a non-Hermitian matrix."""


class IllFormedStateError(ValueError):
    """A cq-state with trace above one or a non-PSD block."""


class NonSubunitalError(ValueError):
    """A channel used on assertions would map the identity above the identity."""


# ──────────────────────────── cq-states ───────────────────────────────────────


def _merge_into(
    acc: dict[ClassicalState, list[StateVector]],
    sigma: ClassicalState,
    block: Iterable[StateVector],
) -> None:
    acc.setdefault(sigma, []).extend(block)


@dataclass(frozen=True, eq=False)
class CqState:
    """Finite-support map σ -> ensemble, branches sorted canonically by σ."""

    layout: QuantumLayout
    branches: tuple[tuple[ClassicalState, Ensemble], ...] = ()

    def __post_init__(self) -> None:
        dim = self.layout.dim
        for sigma, block in self.branches:
            for v in block:
                if v.dim != dim:
                    raise IllFormedStateError(
                        f"block at {sigma} has dimension {v.dim}, layout {self.layout} needs {dim}"
                    )
        if self.trace > 1.0 + NORM_TOL:
            raise IllFormedStateError(f"cq-state has total trace {self.trace:.12g} > 1")

    @classmethod
    def from_map(
        cls, layout: QuantumLayout, mapping: Mapping[ClassicalState, Iterable[StateVector]]
    ) -> CqState:
        """Build a state, dropping empty blocks and compressing long ensembles."""
        dim = layout.dim
        items = []
        for sigma in sorted(mapping, key=ClassicalState.sort_key):
            block = compress(tuple(mapping[sigma]), dim)
            if block:
                items.append((sigma, block))
        return cls(layout, tuple(items))

    @classmethod
    def bottom(cls, layout: QuantumLayout) -> CqState:
        return cls(layout, ())

    @classmethod
    def point(
        cls, sigma: ClassicalState, layout: QuantumLayout, vector: np.ndarray, weight: float = 1.0
    ) -> CqState:
        """``<σ, weight·|v><v|>`` for a (not necessarily normalised) vector."""
        v = StateVector.from_unnormalised(vector, weight)
        return cls.from_map(layout, {sigma: [v] if v is not None else []})

    @classmethod
    def from_density(cls, sigma: ClassicalState, layout: QuantumLayout, rho: np.ndarray) -> CqState:
        margin = psd_margin(rho, NORM_TOL)
        if not margin.is_psd:
            raise IllFormedStateError(f"block at {sigma} has eigenvalue {margin.min_eig:.3g}")
        return cls.from_map(layout, {sigma: ensemble_from_density(np.asarray(rho, dtype=complex))})

    @property
    def support(self) -> tuple[ClassicalState, ...]:
        return tuple(sigma for sigma, _ in self.branches)

    @property
    def trace(self) -> float:
        return float(sum(ensemble_mass(block) for _, block in self.branches))

    def block(self, sigma: ClassicalState) -> Ensemble:
        for s, block in self.branches:
            if s == sigma:
                return block
        return ()

    def density(self, sigma: ClassicalState) -> np.ndarray:
        return densify(self.block(sigma), self.layout.dim)

    def mass(self, sigma: ClassicalState) -> float:
        return ensemble_mass(self.block(sigma))

    def merge(self, *others: CqState) -> CqState:
        """Pointwise sum ``Δ + Δ'`` (blocks at equal σ are unioned)."""
        acc: dict[ClassicalState, list[StateVector]] = {}
        for state in (self, *others):
            if state.layout != self.layout:
                raise LayoutError(f"cannot add states over {self.layout} and {state.layout}")
            for sigma, block in state.branches:
                _merge_into(acc, sigma, block)
        return CqState.from_map(self.layout, acc)

    def scaled(self, factor: float) -> CqState:
        if factor < 0:
            raise IllFormedStateError("negative scaling of a cq-state; use linear_combine")
        if factor == 0:
            return CqState.bottom(self.layout)
        return CqState.from_map(
            self.layout, {s: [v.scaled(factor) for v in b] for s, b in self.branches}
        )

    def pruned(self, threshold: float) -> tuple[CqState, float]:
        """Drop branches whose mass is below *threshold*; also returns the discarded mass."""
        if threshold <= 0:
            return self, 0.0
        kept, lost = [], 0.0
        for sigma, block in self.branches:
            m = ensemble_mass(block)
            if m < threshold:
                lost += m
            else:
                kept.append((sigma, block))
        return CqState(self.layout, tuple(kept)), lost

    def extend(self, layout: QuantumLayout) -> CqState:
        """Tensor every block with ``|0>`` on the variables of *layout* missing here."""
        if not self.layout.issubset(layout):
            raise LayoutError(f"{self.layout} is not contained in {layout}")
        if layout == self.layout:
            return self
        names = list(self.layout.names)
        zero_rest = QuantumLayout(tuple(v for v in layout.variables if v[0] not in self.layout))
        ordered = QuantumLayout(self.layout.variables + zero_rest.variables)
        pad = np.zeros(zero_rest.dim, dtype=complex)
        pad[0] = 1.0
        perm = [ordered.index(n) for n in layout.names]
        out: dict[ClassicalState, list[StateVector]] = {}
        for sigma, block in self.branches:
            for v in block:
                t = np.kron(v.amplitudes, pad).reshape(ordered.dims).transpose(perm).reshape(-1)
                out.setdefault(sigma, []).append(StateVector(t, v.weight))
        logger.debug("extended state from %s to %s (%s)", self.layout, layout, names)
        return CqState.from_map(layout, out)

    def __str__(self) -> str:
        parts = [f"<{s}, mass {ensemble_mass(b):.6g}>" for s, b in self.branches]
        return " ⊕ ".join(parts) if parts else "⊥"


def restrict(delta: CqState, p: Expr) -> CqState:
    """``Δ|_p``: keep the branches whose σ satisfies *p*."""
    return CqState(delta.layout, tuple((s, b) for s, b in delta.branches if eval_pred(p, s)))


def subst_state(
    delta: CqState, name: str, e: Expr, types: Mapping[str, VarType] | None = None
) -> CqState:
    """``Δ[x/e]``: move each branch to ``σ[x ↦ σ(e)]``, merging collisions."""
    acc: dict[ClassicalState, list[StateVector]] = {}
    for sigma, block in delta.branches:
        _merge_into(acc, update(sigma, name, eval_expr(e, sigma), types), block)
    return CqState.from_map(delta.layout, acc)


def linear_combine_states(terms: Sequence[tuple[float, CqState]]) -> CqState:
    """``Σ λ_i Δ_i``; negative coefficients are allowed when every block stays PSD."""
    if not terms:
        raise IllFormedStateError("linear_combine needs at least one term")
    layout = terms[0][1].layout
    if any(d.layout != layout for _, d in terms):
        raise LayoutError("linear_combine over differing layouts")
    if all(lam >= 0 for lam, _ in terms):
        return CqState.bottom(layout).merge(*(d.scaled(lam) for lam, d in terms))
    dim = layout.dim
    dense: dict[ClassicalState, np.ndarray] = {}
    for lam, d in terms:
        for sigma, block in d.branches:
            dense.setdefault(sigma, np.zeros((dim, dim), dtype=complex))
            dense[sigma] += lam * densify(block, dim)
    out: dict[ClassicalState, Ensemble] = {}
    for sigma, rho in dense.items():
        margin = psd_margin(rho, NORM_TOL)
        if not margin.is_psd:
            raise IllFormedStateError(
                f"linear combination has eigenvalue {margin.min_eig:.3g} at {sigma}"
            )
        out[sigma] = ensemble_from_density(rho)
    return CqState.from_map(layout, out)


def state_distance(a: CqState, b: CqState) -> float:
    """Largest per-σ trace distance ``½‖Δ(σ) − Δ'(σ)‖₁`` between two states."""
    if a.layout != b.layout:
        raise LayoutError(f"cannot compare states over {a.layout} and {b.layout}")
    worst = 0.0
    for sigma in set(a.support) | set(b.support):
        diff = a.density(sigma) - b.density(sigma)
        eig = np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))
        worst = max(worst, 0.5 * float(np.abs(eig).sum()))
    return worst


# ──────────────────────────── cq-assertions ───────────────────────────────────


@dataclass(frozen=True, eq=False)
class Term:
    """Guarded term ``<guard, matrix>``; the matrix acts on the owning assertion's layout."""

    guard: Expr
    matrix: np.ndarray

    @property
    def key(self) -> str:
        return format_expr(self.guard)


@dataclass(frozen=True, eq=False)
class CqAssertion:
    """``Θ = Σ <p_i, M_i>`` over the quantum variables of *layout*."""

    layout: QuantumLayout
    terms: tuple[Term, ...] = ()

    def __post_init__(self) -> None:
        dim = self.layout.dim
        fixed = []
        for t in self.terms:
            m = np.asarray(t.matrix, dtype=complex)
            if m.ndim == 0:
                m = m.reshape(1, 1)
            if m.shape != (dim, dim):
                raise LayoutError(f"term matrix of shape {m.shape} on layout {self.layout}")
            if not is_hermitian(m, NORM_TOL):
                raise MalformedAssertionError(f"term guarded by {t.key} is not Hermitian")
            fixed.append(Term(t.guard, m))
        object.__setattr__(self, "terms", tuple(fixed))

    @classmethod
    def top(cls, layout: QuantumLayout = QuantumLayout()) -> CqAssertion:
        return cls(layout, (Term(TRUE, np.eye(layout.dim, dtype=complex)),))

    @classmethod
    def bottom(cls, layout: QuantumLayout = QuantumLayout()) -> CqAssertion:
        return cls(layout, ())

    @classmethod
    def of(cls, layout: QuantumLayout, *pairs: tuple[Expr, np.ndarray | float]) -> CqAssertion:
        dim = layout.dim
        terms = []
        for guard, m in pairs:
            if np.ndim(m) == 0:
                m = complex(m) * np.eye(dim)
            terms.append(Term(guard, as_dense(np.asarray(m, dtype=complex))))
        return cls(layout, tuple(terms))

    def evaluate(self, sigma: ClassicalState) -> np.ndarray:
        """Unchecked ``Σ_{σ ⊨ p_i} M_i``."""
        acc = np.zeros((self.layout.dim, self.layout.dim), dtype=complex)
        for t in self.terms:
            if eval_pred(t.guard, sigma):
                acc += t.matrix
        return acc

    def plus(self, *others: CqAssertion) -> CqAssertion:
        terms = list(self.terms)
        for other in others:
            if other.layout != self.layout:
                raise LayoutError(f"cannot add assertions over {self.layout} and {other.layout}")
            terms.extend(other.terms)
        return CqAssertion(self.layout, tuple(terms))

    def scaled(self, factor: float) -> CqAssertion:
        return CqAssertion(self.layout, tuple(Term(t.guard, factor * t.matrix) for t in self.terms))

    def guarded(self, p: Expr) -> CqAssertion:
        """``p ∧ Θ``."""
        if p == TRUE:
            return self
        if p == FALSE:
            return CqAssertion.bottom(self.layout)
        return CqAssertion(self.layout, tuple(Term(conj(p, t.guard), t.matrix) for t in self.terms))

    def complement(self) -> CqAssertion:
        """``⊤ − Θ``."""
        return CqAssertion.top(self.layout).plus(self.scaled(-1.0))

    def substituted(self, name: str, e: Expr) -> CqAssertion:
        return CqAssertion(
            self.layout, tuple(Term(substitute(t.guard, name, e), t.matrix) for t in self.terms)
        )

    def map_matrices(
        self, fn: Callable[[np.ndarray], np.ndarray], layout: QuantumLayout | None = None
    ) -> CqAssertion:
        terms = tuple(Term(t.guard, fn(t.matrix)) for t in self.terms)
        return CqAssertion(layout or self.layout, terms)

    def extend(self, layout: QuantumLayout) -> CqAssertion:
        """``Θ ⊗ I`` on *layout* (which must contain this assertion's variables)."""
        if not self.layout.issubset(layout):
            raise LayoutError(f"{self.layout} is not contained in {layout}")
        if layout == self.layout:
            return self
        names = self.layout.names
        return self.map_matrices(lambda m: embed(m, names, layout), layout)

    def compact(self, universe: Sequence[ClassicalState] | None = None) -> CqAssertion:
        """Sum terms with equal guard text; with a universe, drop guards false on all of it."""
        merged: dict[str, Term] = {}
        for t in self.terms:
            if t.key in merged:
                merged[t.key] = Term(t.guard, merged[t.key].matrix + t.matrix)
            else:
                merged[t.key] = t
        terms = [t for t in merged.values() if np.any(np.abs(t.matrix) > 0.0)]
        if universe is not None:
            terms = [t for t in terms if any(eval_pred(t.guard, s) for s in universe)]
        return CqAssertion(self.layout, tuple(terms))

    def __str__(self) -> str:
        if not self.terms:
            return "⊥"
        return " + ".join(f"<{t.key}, {self.layout.dim}x{self.layout.dim}>" for t in self.terms)


def eval_assertion(theta: CqAssertion, sigma: ClassicalState, tol: float = NORM_TOL) -> np.ndarray:
    """``Θ(σ)``, checked against ``0 ⊑ Θ(σ) ⊑ I`` within *tol*."""
    m = theta.evaluate(sigma)
    if theta.layout.dim <= DENSE_CHECK_LIMIT:
        low = psd_margin(m, tol)
        high = psd_margin(np.eye(theta.layout.dim) - m, tol)
        if not (low.is_psd and high.is_psd):
            raise MalformedAssertionError(
                f"assertion at {sigma} has spectrum outside [0, 1] "
                f"(min {low.min_eig:.3g}, max {1 - high.min_eig:.3g})"
            )
    return m


def expectation(delta: CqState, theta: CqAssertion, *, check: bool = True) -> float:
    """``Exp(Δ ⊨ Θ) = Σ_σ Σ_v weight·<v|(Θ(σ) ⊗ I)|v>``."""
    if not theta.layout.issubset(delta.layout):
        raise LayoutError(f"assertion over {theta.layout} not covered by state over {delta.layout}")
    names = theta.layout.names
    total = 0.0
    for sigma, block in delta.branches:
        m = eval_assertion(theta, sigma) if check else theta.evaluate(sigma)
        if not np.any(m):
            continue
        total += expectation_on(block, m, names, delta.layout)
    return total


def linear_combine_assertions(terms: Sequence[tuple[float, CqAssertion]]) -> CqAssertion:
    """``Σ λ_i Θ_i`` (term concatenation; bounds are checked at evaluation sites)."""
    if not terms:
        raise MalformedAssertionError("linear_combine needs at least one term")
    layout = terms[0][1].layout
    parts = [theta.scaled(lam) for lam, theta in terms]
    return CqAssertion(layout, ()).plus(*parts)


def subst_assertion(theta: CqAssertion, name: str, e: Expr) -> CqAssertion:
    """``Θ[x/e]``: guard-wise substitution."""
    return theta.substituted(name, e)


class LeqResult(NamedTuple):
    holds: bool
    worst_margin: float
    witness: ClassicalState | None
    direction: np.ndarray | None = None


def assertion_leq(
    theta: CqAssertion,
    psi: CqAssertion,
    universe: Sequence[ClassicalState],
    tol: float = NORM_TOL,
    threads: int = 1,
) -> LeqResult:
    """``Θ ≲ Ψ`` on *universe*: both sides are padded with identities to the union layout."""
    if not universe:
        raise ValueError("assertion_leq needs a nonempty universe")
    layout = theta.layout.union(psi.layout)
    lhs, rhs = theta.extend(layout), psi.extend(layout)

    def margin_at(sigma: ClassicalState):
        return psd_margin(rhs.evaluate(sigma) - lhs.evaluate(sigma), tol)

    margins = parallel_map(margin_at, universe, threads)
    worst_idx = min(range(len(margins)), key=lambda i: margins[i].min_eig)
    worst = margins[worst_idx]
    logger.debug(
        "assertion_leq over %d points: worst margin %.3g at %s",
        len(universe), worst.min_eig, universe[worst_idx],
    )
    return LeqResult(worst.min_eig >= -tol, worst.min_eig, universe[worst_idx], worst.direction)


def apply_superop_assertion(
    theta: CqAssertion,
    ch: KrausChannel,
    on: Sequence[str] | None = None,
    tol: float = NORM_TOL,
) -> CqAssertion:
    """Term-wise ``M ↦ Σ_i E_i M E_i^†``; with *on* the channel acts on that subsystem."""
    if not ch.is_subunital(tol):
        raise NonSubunitalError(f"channel {ch.label or '(unnamed)'} is not sub-unital")
    if on is None:
        if ch.input_dim != theta.layout.dim or ch.output_dim != theta.layout.dim:
            raise LayoutError(
                f"channel {ch.input_dim}->{ch.output_dim} does not act on layout {theta.layout}"
            )
        ops = [as_dense(op) for op in ch.operators]
    else:
        try:
            ops = [embed(op, on, theta.layout) for op in ch.operators]
        except LinalgError as exc:
            raise LayoutError(str(exc)) from exc
    return theta.map_matrices(lambda m: sum(e @ m @ e.conj().T for e in ops))


def apply_superop_state(delta: CqState, ch: KrausChannel, on: Sequence[str]) -> CqState:
    """Push every block of *delta* through *ch* acting on *on*."""
    return CqState.from_map(
        delta.layout,
        {s: apply_channel(ch, b, on, delta.layout) for s, b in delta.branches},
    )
