"""Dense complex linear algebra over the tensor product of declared quantum variables.

Quantum blocks are vector ensembles: finite sequences of weighted, normalised state vectors.
Dense matrices are only built for assertions, wp and Löwner comparisons.  Operators are either
dense ``numpy`` arrays or :class:`Permutation` objects (basis permutations such as modular
multiplication), which are applied by index shuffling and never densified during simulation.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import NamedTuple, Union

import numpy as np
import scipy.linalg

logger = logging.getLogger(__name__)

NORM_TOL = 1e-9
HERMITIAN_TOL = 1e-12
ZERO_MASS = 1e-20


class LinalgError(ValueError):
    """Dimension mismatch, unknown variable or malformed linear-algebra object."""


# ──────────────────────────── Operators ───────────────────────────────────────


@dataclass(frozen=True, eq=False)
class Permutation:
    """Basis permutation ``|i> -> |image[i]>``."""

    image: np.ndarray

    def __post_init__(self) -> None:
        image = np.asarray(self.image, dtype=np.int64)
        if image.ndim != 1 or not np.array_equal(np.sort(image), np.arange(image.size)):
            raise LinalgError("permutation image must be a rearrangement of 0..d-1")
        object.__setattr__(self, "image", image)

    @property
    def dim(self) -> int:
        return int(self.image.size)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.dim, self.dim)

    def inverse(self) -> Permutation:
        inv = np.empty_like(self.image)
        inv[self.image] = np.arange(self.dim)
        return Permutation(inv)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=complex)
        out[self.image, np.arange(self.dim)] = 1.0
        return out


Operator = Union[np.ndarray, Permutation]


def as_dense(op: Operator) -> np.ndarray:
    """Materialise *op* as a complex 2-D array."""
    if isinstance(op, Permutation):
        return op.to_dense()
    arr = np.asarray(op, dtype=complex)
    if arr.ndim != 2:
        raise LinalgError(f"expected a matrix, got array of shape {arr.shape}")
    return arr


def adjoint(op: Operator) -> Operator:
    if isinstance(op, Permutation):
        return op.inverse()
    return np.asarray(op, dtype=complex).conj().T


def is_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    m = np.asarray(m)
    return m.shape[0] == m.shape[1] and bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= tol)


def is_unitary(op: Operator, tol: float = NORM_TOL) -> bool:
    if isinstance(op, Permutation):
        return True
    m = as_dense(op)
    if m.shape[0] != m.shape[1]:
        return False
    return bool(np.allclose(m.conj().T @ m, np.eye(m.shape[0]), atol=tol, rtol=0.0))


# ──────────────────────────── Layout ──────────────────────────────────────────


@dataclass(frozen=True)
class QuantumLayout:
    """Ordered quantum variables with their dimensions; fixes tensor ordering."""

    variables: tuple[tuple[str, int], ...] = ()

    def __post_init__(self) -> None:
        names = [name for name, _ in self.variables]
        if len(set(names)) != len(names):
            raise LinalgError(f"duplicate quantum variables in layout: {names}")
        for name, d in self.variables:
            if int(d) < 2:
                raise LinalgError(f"quantum variable {name!r} has dimension {d} < 2")

    @classmethod
    def of(cls, *pairs: tuple[str, int]) -> QuantumLayout:
        return cls(tuple((n, int(d)) for n, d in pairs))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.variables)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.variables)

    @property
    def dim(self) -> int:
        return math.prod(self.dims)

    def __contains__(self, name: object) -> bool:
        return name in self.names

    def __len__(self) -> int:
        return len(self.variables)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise LinalgError(f"unknown quantum variable {name!r}") from None

    def dim_of(self, names: Iterable[str]) -> int:
        lookup = dict(self.variables)
        total = 1
        for n in names:
            if n not in lookup:
                raise LinalgError(f"unknown quantum variable {n!r}")
            total *= lookup[n]
        return total

    def subset(self, names: Iterable[str]) -> QuantumLayout:
        """Sub-layout on *names*, kept in this layout's canonical order."""
        wanted = set(names)
        unknown = wanted - set(self.names)
        if unknown:
            raise LinalgError(f"unknown quantum variables {sorted(unknown)}")
        return QuantumLayout(tuple(v for v in self.variables if v[0] in wanted))

    def union(self, other: QuantumLayout) -> QuantumLayout:
        mine = dict(self.variables)
        for name, d in other.variables:
            if name in mine and mine[name] != d:
                raise LinalgError(f"variable {name!r} has dimensions {mine[name]} and {d}")
        extra = tuple(v for v in other.variables if v[0] not in mine)
        return QuantumLayout(self.variables + extra)

    def issubset(self, other: QuantumLayout) -> bool:
        theirs = dict(other.variables)
        return all(theirs.get(n) == d for n, d in self.variables)

    def __str__(self) -> str:
        return "[" + ", ".join(f"{n}:{d}" for n, d in self.variables) + "]"


# ──────────────────────────── Vectors and channels ────────────────────────────


@dataclass(frozen=True, eq=False)
class StateVector:
    """A weighted branch ``weight * |v><v|`` with ``|v>`` normalised (or exactly zero)."""

    amplitudes: np.ndarray
    weight: float = 1.0

    def __post_init__(self) -> None:
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        norm = float(np.linalg.norm(amps))
        if norm != 0.0 and abs(norm - 1.0) > NORM_TOL:
            raise LinalgError(f"state vector norm {norm:.12g} is neither 0 nor 1")
        if not (0.0 <= self.weight <= 1.0 + NORM_TOL):
            raise LinalgError(f"state vector weight {self.weight} outside [0, 1]")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "weight", float(self.weight))

    @classmethod
    def from_unnormalised(cls, amplitudes: np.ndarray, weight: float = 1.0) -> StateVector | None:
        """Normalise *amplitudes*, folding ``||v||²`` into the weight; None for zero vectors."""
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        norm_sq = float(np.vdot(amps, amps).real)
        mass = norm_sq * weight
        if mass <= ZERO_MASS:
            return None
        return cls(amps / math.sqrt(norm_sq), min(mass, 1.0 + NORM_TOL))

    @classmethod
    def basis(cls, index: int, dim: int, weight: float = 1.0) -> StateVector:
        amps = np.zeros(dim, dtype=complex)
        amps[index] = 1.0
        return cls(amps, weight)

    @property
    def dim(self) -> int:
        return int(self.amplitudes.size)

    def scaled(self, factor: float) -> StateVector:
        return StateVector(self.amplitudes, self.weight * factor)

    def density(self) -> np.ndarray:
        return self.weight * np.outer(self.amplitudes, self.amplitudes.conj())


Ensemble = tuple[StateVector, ...]


def ensemble_mass(block: Iterable[StateVector]) -> float:
    return float(sum(v.weight for v in block))


def densify(block: Iterable[StateVector], dim: int) -> np.ndarray:
    rho = np.zeros((dim, dim), dtype=complex)
    for v in block:
        if v.dim != dim:
            raise LinalgError(f"vector of dimension {v.dim} in a block of dimension {dim}")
        rho += v.density()
    return rho


def ensemble_from_density(rho: np.ndarray, cutoff: float = ZERO_MASS) -> Ensemble:
    """Eigen-decompose a PSD block into an ensemble (eigenvalues <= *cutoff* dropped)."""
    rho = 0.5 * (rho + rho.conj().T)
    values, vectors = scipy.linalg.eigh(rho)
    out = []
    for k in range(values.size - 1, -1, -1):
        if values[k] > cutoff:
            out.append(StateVector(vectors[:, k], float(values[k])))
    return tuple(out)


def compress(block: Ensemble, dim: int) -> Ensemble:
    """Rewrite an ensemble longer than *dim* through its eigen-decomposition."""
    if len(block) <= dim:
        return block
    out = ensemble_from_density(densify(block, dim))
    logger.debug("compressed ensemble of %d vectors to %d", len(block), len(out))
    return out


@dataclass(frozen=True, eq=False)
class KrausChannel:
    """Completely positive map ``rho -> sum_i E_i rho E_i^dagger``."""

    operators: tuple[Operator, ...]
    label: str = ""

    def __post_init__(self) -> None:
        ops = tuple(self.operators)
        if not ops:
            raise LinalgError("a Kraus channel needs at least one operator")
        shapes = {op.shape for op in ops}
        if len(shapes) != 1:
            raise LinalgError(f"Kraus operators have differing shapes {sorted(shapes)}")
        object.__setattr__(self, "operators", ops)

    @classmethod
    def unitary(cls, u: Operator, label: str = "") -> KrausChannel:
        return cls((u,), label)

    @property
    def input_dim(self) -> int:
        return int(self.operators[0].shape[1])

    @property
    def output_dim(self) -> int:
        return int(self.operators[0].shape[0])

    def adjoint(self) -> KrausChannel:
        return KrausChannel(tuple(adjoint(op) for op in self.operators), f"{self.label}^†")

    def completeness(self) -> np.ndarray:
        """``sum_i E_i^† E_i`` on the input space."""
        acc = np.zeros((self.input_dim, self.input_dim), dtype=complex)
        for op in self.operators:
            m = as_dense(op)
            acc += m.conj().T @ m
        return acc

    def is_trace_nonincreasing(self, tol: float = NORM_TOL) -> bool:
        gap = np.eye(self.input_dim) - self.completeness()
        return psd_margin(gap, tol).is_psd

    def is_subunital(self, tol: float = NORM_TOL) -> bool:
        """``sum_i E_i E_i^† ⊑ I``: the map used on assertions does not exceed the identity."""
        acc = np.zeros((self.output_dim, self.output_dim), dtype=complex)
        for op in self.operators:
            m = as_dense(op)
            acc += m @ m.conj().T
        return psd_margin(np.eye(self.output_dim) - acc, tol).is_psd

    def apply_dense(self, rho: np.ndarray) -> np.ndarray:
        out = np.zeros((self.output_dim, self.output_dim), dtype=complex)
        for op in self.operators:
            m = as_dense(op)
            out += m @ rho @ m.conj().T
        return out


# ──────────────────────────── Core operations ─────────────────────────────────


def kron(*ms: Operator) -> np.ndarray:
    """Kronecker product of one or more operators (or vectors)."""
    if not ms:
        return np.ones((1, 1), dtype=complex)
    out = as_dense(ms[0]) if not _is_vector(ms[0]) else np.asarray(ms[0], dtype=complex)
    for m in ms[1:]:
        out = np.kron(out, as_dense(m) if not _is_vector(m) else np.asarray(m, dtype=complex))
    return out


def _is_vector(m: Operator) -> bool:
    return not isinstance(m, Permutation) and np.asarray(m).ndim == 1


def _check_targets(on: Sequence[str], layout: QuantumLayout, op_dim: int) -> list[int]:
    if len(set(on)) != len(on):
        raise LinalgError(f"target variables are not distinct: {list(on)}")
    axes = [layout.index(n) for n in on]
    expected = layout.dim_of(on)
    if op_dim != expected:
        raise LinalgError(
            f"operator of dimension {op_dim} does not fit {list(on)} (dimension {expected})"
        )
    return axes


def embed(op: Operator, on: Sequence[str], layout: QuantumLayout) -> np.ndarray:
    """Operator on *layout* acting as *op* on *on* (in that order), identity elsewhere."""
    dense = as_dense(op)
    if dense.shape[0] != dense.shape[1]:
        raise LinalgError(f"embed needs a square operator, got {dense.shape}")
    _check_targets(on, layout, dense.shape[0])
    rest = [n for n in layout.names if n not in on]
    big = np.kron(dense, np.eye(layout.dim_of(rest), dtype=complex))
    order = list(on) + rest
    if order == list(layout.names):
        return big
    lookup = dict(layout.variables)
    order_dims = [lookup[n] for n in order]
    perm = [order.index(n) for n in layout.names]
    k = len(order)
    t = big.reshape(order_dims + order_dims).transpose(perm + [k + p for p in perm])
    return t.reshape(layout.dim, layout.dim)


def apply_on(
    vector: np.ndarray, op: Operator, on: Sequence[str], layout: QuantumLayout
) -> np.ndarray:
    """Apply *op* to the subsystem *on* of a flat state vector over *layout*."""
    axes = _check_targets(on, layout, op.shape[1])
    if op.shape[0] != op.shape[1]:
        raise LinalgError(f"apply_on needs a square operator, got {op.shape}")
    if not axes:
        return as_dense(op)[0, 0] * np.asarray(vector, dtype=complex)
    psi = np.asarray(vector, dtype=complex).reshape(layout.dims)
    front = list(range(len(axes)))
    psi = np.moveaxis(psi, axes, front)
    shape = psi.shape
    flat = psi.reshape(op.shape[1], -1)
    if isinstance(op, Permutation):
        out = np.empty_like(flat)
        out[op.image] = flat
    else:
        out = op @ flat
    return np.moveaxis(out.reshape(shape), front, axes).reshape(-1)


def partial_trace(m: np.ndarray, out: Iterable[str], layout: QuantumLayout) -> np.ndarray:
    """Trace out the variables *out*; the result lives on the remaining variables in order."""
    out = list(out)
    for name in out:
        layout.index(name)
    if not out:
        return np.asarray(m, dtype=complex)
    keep = [n for n in layout.names if n not in out]
    dims = list(layout.dims)
    k = len(dims)
    order = [layout.index(n) for n in keep + out]
    t = np.asarray(m, dtype=complex).reshape(dims + dims)
    t = t.transpose(order + [k + p for p in order])
    dk, do = layout.dim_of(keep), layout.dim_of(out)
    t = t.reshape(dk, do, dk, do)
    return np.trace(t, axis1=1, axis2=3)


class Margin(NamedTuple):
    """Outcome of a positive-semidefiniteness test."""

    is_psd: bool
    min_eig: float
    direction: np.ndarray | None = None


def psd_margin(m: np.ndarray, tol: float = NORM_TOL) -> Margin:
    """Smallest eigenvalue of a Hermitian matrix and whether it is ``>= -tol``."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise LinalgError(f"psd_margin needs a square matrix, got shape {m.shape}")
    if not is_hermitian(m, NORM_TOL):
        raise LinalgError("psd_margin called on a non-Hermitian matrix")
    values, vectors = scipy.linalg.eigh(0.5 * (m + m.conj().T))
    min_eig = float(values[0])
    if abs(min_eig) < 1e-15:
        min_eig = 0.0
    return Margin(min_eig >= -tol, min_eig, vectors[:, 0])


def apply_channel(
    ch: KrausChannel,
    block: Iterable[StateVector],
    on: Sequence[str] | None = None,
    layout: QuantumLayout | None = None,
) -> Ensemble:
    """Push an ensemble through *ch*; with *on*/*layout* the channel acts on that subsystem.

    Each output vector is ``E_i v`` renormalised, weight scaled by ``||E_i v||²``;
    numerically zero branches are dropped.
    """
    out: list[StateVector] = []
    for v in block:
        for op in ch.operators:
            if on is None:
                if v.dim != op.shape[1]:
                    raise LinalgError(f"channel input {op.shape[1]} vs vector {v.dim}")
                w = op @ v.amplitudes if not isinstance(op, Permutation) else _permute(op, v)
            else:
                w = apply_on(v.amplitudes, op, on, layout)
            branch = StateVector.from_unnormalised(w, v.weight)
            if branch is not None:
                out.append(branch)
    return tuple(out)


def _permute(p: Permutation, v: StateVector) -> np.ndarray:
    out = np.empty_like(v.amplitudes)
    out[p.image] = v.amplitudes
    return out


def measure_basis(
    block: Iterable[StateVector], on: Sequence[str], layout: QuantumLayout
) -> list[tuple[int, Ensemble]]:
    """Computational-basis measurement of *on*: ``(outcome, post-measurement ensemble)`` pairs.

    Outcomes follow the basis index convention (first variable most significant) and appear in
    increasing order; outcomes with numerically zero mass are omitted.
    """
    axes = _check_targets(on, layout, layout.dim_of(on))
    d_on = layout.dim_of(on)
    buckets: dict[int, list[StateVector]] = {}
    front = list(range(len(axes)))
    for v in block:
        psi = np.moveaxis(v.amplitudes.reshape(layout.dims), axes, front)
        shape = psi.shape
        flat = psi.reshape(d_on, -1)
        probs = np.einsum("ij,ij->i", flat.conj(), flat).real * v.weight
        for k in np.flatnonzero(probs > ZERO_MASS):
            collapsed = np.zeros_like(flat)
            collapsed[k] = flat[k]
            amps = np.moveaxis(collapsed.reshape(shape), front, axes).reshape(-1)
            branch = StateVector.from_unnormalised(amps, v.weight)
            if branch is not None:
                buckets.setdefault(int(k), []).append(branch)
    return [(k, tuple(buckets[k])) for k in sorted(buckets)]


def basis_projectors(d: int) -> tuple[np.ndarray, ...]:
    out = []
    for k in range(d):
        p = np.zeros((d, d), dtype=complex)
        p[k, k] = 1.0
        out.append(p)
    return tuple(out)


def expectation_on(
    block: Iterable[StateVector], m: np.ndarray, on: Sequence[str], layout: QuantumLayout
) -> float:
    """``sum weight * <v|(M ⊗ I)|v>`` for *M* acting on *on*."""
    total = 0.0
    for v in block:
        mv = apply_on(v.amplitudes, m, on, layout)
        total += v.weight * float(np.vdot(v.amplitudes, mv).real)
    return total


# ──────────────────────────── Random instances ────────────────────────────────


@dataclass
class RandomSource:
    """Seeded generator for Haar-random pure states and random mixtures."""

    seed: int = 0
    rng: np.random.Generator = field(init=False)

    def __post_init__(self) -> None:
        self.rng = np.random.default_rng(self.seed)

    def pure(self, dim: int) -> np.ndarray:
        z = self.rng.normal(size=dim) + 1j * self.rng.normal(size=dim)
        return z / np.linalg.norm(z)

    def mixture(self, dim: int, rank: int | None = None) -> Ensemble:
        rank = rank or int(self.rng.integers(1, dim + 1))
        weights = self.rng.dirichlet(np.ones(rank))
        return tuple(StateVector(self.pure(dim), float(w)) for w in weights)

    def unitary(self, dim: int) -> np.ndarray:
        shape = (dim, dim)
        z = (self.rng.normal(size=shape) + 1j * self.rng.normal(size=shape)) / math.sqrt(2)
        q, r = np.linalg.qr(z)
        phases = np.diag(r) / np.abs(np.diag(r))
        return q * phases

    def hermitian_effect(self, dim: int) -> np.ndarray:
        """Random Hermitian ``0 ⊑ M ⊑ I``."""
        u = self.unitary(dim)
        return u @ np.diag(self.rng.uniform(0.0, 1.0, size=dim)) @ u.conj().T
