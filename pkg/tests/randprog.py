"""Seeded generator of small well-typed programs whose loops run at most three times.

By default every classical value stays inside 0..3, so the declared ranges are a closed universe.
With ``escape`` the assignments may also leave the ranges.
``z`` is reserved for loop counters and loops do not nest.
"""

from __future__ import annotations

import numpy as np

from cq_hoare.classical import ClassicalState
from cq_hoare.cqmodel import CqAssertion, CqState
from cq_hoare.lang.parser import parse, parse_expr
from cq_hoare.lang.syntax import SourceProgram
from cq_hoare.linalg import QuantumLayout, RandomSource

HEADER = """\
program rand
  qvar a, b, c : qudit(2)
  var x, y, z : int range 0..3
  measurement PM = {proj(ket(+)), proj(ket(-))}
body
"""

QVARS = ("a", "b", "c")
WRITABLE = ("x", "y")
READABLE = ("x", "y", "z")

_EXPRS = (
    "0",
    "3",
    "{u}",
    "3 - {u}",
    "({u} + 1) mod 4",
    "({u} + {v}) mod 4",
    "{u} * {v} mod 4",
    "max({u}, {v})",
    "{u} div 2",
    "min({u} + {v}, 3)",
    "abs({u} - {v})",
)
_ESCAPING = (
    "{u} + 1",
    "{u} + {v}",
    "{u} - 2",
    "2 * {u} + 1",
)
_GUARDS = (
    "{u} = 0",
    "{u} < {v}",
    "{u} >= 2",
    "{u} != {v}",
    "{u} in {{1, 3}}",
    "not ({u} = {v})",
    "{u} = 0 or {v} = 3",
    "exists w in 0..{u} . w = {v}",
)
_GATES_1 = ("H", "X", "Y", "Z", "S", "T")
_GATES_2 = ("CNOT", "CZ", "SWAP")


class ProgramGenerator:
    def __init__(self, seed: int, max_depth: int = 4, escape: bool = False) -> None:
        self.rng = np.random.default_rng(seed)
        self.max_depth = max_depth
        self.exprs = _EXPRS + _ESCAPING if escape else _EXPRS
        self.successor = "{u} + 1" if escape else "({u} + 1) mod 4"

    def _pick(self, options):  # noqa: ANN001, ANN202
        return options[int(self.rng.integers(len(options)))]

    def _fill(self, template: str) -> str:
        return template.format(u=self._pick(READABLE), v=self._pick(READABLE))

    def _qvars(self, k: int) -> str:
        return ", ".join(str(q) for q in self.rng.choice(QVARS, size=k, replace=False))

    def atomic(self) -> str:
        t = self._pick(WRITABLE)
        kind = int(self.rng.integers(11))
        if kind == 0:
            return "skip"
        if kind == 1:
            return f"{t} := {self._fill(self._pick(self.exprs))}"
        if kind == 2:
            return f"{t} :=$ unif(0, 3)"
        if kind == 3:
            return f"{t} :=$ {{0 : 1/2, 3 : 1/4}}"
        if kind == 4:
            return f"{t} :=$ point({self._fill(self.successor)})"
        if kind == 5:
            return f"{self._qvars(1)} := 0"
        if kind in (6, 7):
            return f"{self._qvars(1)} *= {self._pick(_GATES_1)}"
        if kind == 8:
            return f"{self._qvars(2)} *= {self._pick(_GATES_2)}"
        if kind == 9:
            return f"{t} := measure {self._qvars(int(self.rng.integers(1, 3)))}"
        return f"{t} := measure PM {self._qvars(1)}"

    def block(self, depth: int, in_loop: bool) -> str:
        count = int(self.rng.integers(1, 4))
        return ";\n".join(self.stmt(depth, in_loop) for _ in range(count))

    def stmt(self, depth: int, in_loop: bool) -> str:
        roll = self.rng.random()
        if roll < 0.03:
            return "abort"
        if depth >= self.max_depth or roll < 0.65:
            return self.atomic()
        guard = self._fill(self._pick(_GUARDS))
        if in_loop or roll < 0.85:
            then = self.block(depth + 1, in_loop)
            if self.rng.random() < 0.5:
                return f"if {guard} then\n{then}\nend"
            return f"if {guard} then\n{then}\nelse\n{self.block(depth + 1, in_loop)}\nend"
        bound = int(self.rng.integers(1, 4))
        body = self.block(depth + 1, True)
        return f"z := 0;\nwhile z < {bound} do\n{body};\nz := z + 1\nend"

    def source(self) -> str:
        return HEADER + self.block(1, False) + "\nend\n"

    def program(self) -> SourceProgram:
        return parse(self.source())


def random_state(
    rs: RandomSource, layout: QuantumLayout, universe: list[ClassicalState], points: int = 3
) -> CqState:
    """Mixed blocks at a few random universe points, total trace in [0.5, 1]."""
    chosen = rs.rng.choice(len(universe), size=points, replace=False)
    weights = rs.rng.dirichlet(np.ones(points)) * rs.rng.uniform(0.5, 1.0)
    return CqState.from_map(
        layout,
        {
            universe[i]: [v.scaled(float(w)) for v in rs.mixture(layout.dim, rank=2)]
            for i, w in zip(chosen, weights)
        },
    )


def random_assertion(
    rs: RandomSource, layout: QuantumLayout, values: range = range(4)
) -> CqAssertion:
    """One random effect per value of ``x`` in *values*; the guards are disjoint."""
    return CqAssertion.of(
        layout, *((parse_expr(f"x = {k}"), rs.hermitian_effect(layout.dim)) for k in values)
    )
