"""Pydantic report models emitted by the CLI (text, JSON and YAML share these fields)."""

from __future__ import annotations

import hashlib
from collections.abc import Iterable, Sequence
from typing import Any

from pydantic import BaseModel, Field

from cq_hoare import __version__
from cq_hoare.classical import ClassicalState, Value
from cq_hoare.formats import format_assertion
from cq_hoare.hoare import Verdict
from cq_hoare.semantics import RunResult, outcome_distribution
from cq_hoare.wp import WpResult


def digest(*texts: str) -> str:
    """Short sha256 over the input texts, in order."""
    h = hashlib.sha256()
    for text in texts:
        h.update(text.encode("utf-8"))
        h.update(b"\0")
    return h.hexdigest()[:16]


def _plain(sigma: ClassicalState | None) -> dict[str, Value] | None:
    return None if sigma is None else sigma.as_dict()


# ──────────────────────────── Common ──────────────────────────────────────────


class ReportBase(BaseModel):
    command: str
    program: str
    inputs_digest: str
    version: str = __version__
    timing: float | None = Field(default=None, description="Seconds; only set with --timing")


# ──────────────────────────── run ─────────────────────────────────────────────


class OutcomeRow(BaseModel):
    values: dict[str, Value]
    probability: float


class RunReport(ReportBase):
    command: str = "run"
    variables: list[str] = Field(default_factory=list)
    outcomes: list[OutcomeRow] = Field(default_factory=list)
    terminated_mass: float = 0.0
    residual_mass: float = 0.0
    aborted_mass: float = 0.0
    running_mass: float = 0.0
    pruned_mass: float = 0.0
    step_bound_hit: bool = False
    steps: int = 0
    branch_count: int = 0

    @classmethod
    def from_result(
        cls, program: str, inputs_digest: str, result: RunResult, variables: Sequence[str]
    ) -> RunReport:
        dist = outcome_distribution(result.terminated, variables)
        rows = [
            OutcomeRow(values=dict(zip(variables, key)), probability=p) for key, p in dist.items()
        ]
        return cls(
            program=program,
            inputs_digest=inputs_digest,
            variables=list(variables),
            outcomes=rows,
            terminated_mass=result.terminated_mass,
            residual_mass=result.residual_mass,
            aborted_mass=result.aborted_mass,
            running_mass=result.running_mass,
            pruned_mass=result.pruned_mass,
            step_bound_hit=result.step_bound_hit,
            steps=result.steps,
            branch_count=result.branch_count,
        )


# ──────────────────────────── wp / wlp ────────────────────────────────────────


class WpReport(ReportBase):
    command: str = "wp"
    assertion: str = Field(description="The transformed assertion in .cqa form")
    terms: int = 0
    converged: bool = True
    iterations: int = 0
    approximation: str = "exact"

    @classmethod
    def from_result(
        cls, command: str, program: str, inputs_digest: str, result: WpResult
    ) -> WpReport:
        return cls(
            command=command,
            program=program,
            inputs_digest=inputs_digest,
            assertion=format_assertion(result.assertion),
            terms=len(result.assertion.terms),
            converged=result.converged,
            iterations=result.iterations,
            approximation=result.approximation,
        )


# ──────────────────────────── check ───────────────────────────────────────────


class VerdictReport(ReportBase):
    command: str = "check"
    mode: str = "total"
    method: str
    holds: bool
    worst_margin: float
    witness: dict[str, Value] | None = None
    diagnostics: list[str] = Field(default_factory=list)
    iterations: int = 0
    converged: bool = True
    premises_hold: bool | None = None

    @classmethod
    def from_verdict(
        cls, program: str, inputs_digest: str, mode: str, verdict: Verdict
    ) -> VerdictReport:
        return cls(
            program=program,
            inputs_digest=inputs_digest,
            mode=mode,
            method=verdict.method,
            holds=verdict.holds,
            worst_margin=float(verdict.worst_margin),
            witness=_plain(verdict.witness),
            diagnostics=list(verdict.diagnostics),
            iterations=verdict.iterations,
            converged=verdict.converged,
            premises_hold=verdict.premises_hold,
        )


# ──────────────────────────── examples ────────────────────────────────────────


class ReferenceRow(BaseModel):
    name: str
    value: str
    provenance: str


class CaseReport(BaseModel):
    name: str
    parameters: dict[str, Any] = Field(default_factory=dict)
    references: list[ReferenceRow] = Field(default_factory=list)
    notes: list[str] = Field(default_factory=list)
    source: str = ""
    pre: str | None = None
    post: str | None = None
    written: list[str] = Field(default_factory=list)

    @classmethod
    def from_case(cls, case: Any, written: Iterable[str] = ()) -> CaseReport:
        params = {k: list(v) if isinstance(v, tuple) else v for k, v in case.parameters.items()}
        return cls(
            name=case.name,
            parameters=params,
            references=[
                ReferenceRow(name=k, value=r.display, provenance=r.provenance)
                for k, r in case.references.items()
            ],
            notes=list(case.notes),
            source=case.source,
            pre=case.pre,
            post=case.post,
            written=list(written),
        )


__all__ = [
    "CaseReport",
    "OutcomeRow",
    "ReferenceRow",
    "ReportBase",
    "RunReport",
    "VerdictReport",
    "WpReport",
    "digest",
]
