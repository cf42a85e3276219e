"""Runtime settings: tolerances, bounds and output preferences."""

from __future__ import annotations

import os

from pydantic import BaseModel, Field

DEFAULT_LINALG_TOL = 1e-9
DEFAULT_HERMITIAN_TOL = 1e-12
DEFAULT_HOARE_TOL = 1e-7
DEFAULT_LOOP_TOL = 1e-12
DEFAULT_LOOP_MAX = 10**6
DEFAULT_MAX_STEPS = 100_000
DEFAULT_ZERO_MASS = 1e-20
DEFAULT_SAMPLES = 64
MAX_UNIVERSE = 200_000


def _threads_from_env() -> int:
    raw = os.environ.get("CQ_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


class Settings(BaseModel):
    """Runtime settings resolved from env vars and CLI flags."""

    # Numerics
    linalg_tol: float = DEFAULT_LINALG_TOL
    hermitian_tol: float = DEFAULT_HERMITIAN_TOL
    hoare_tol: float = Field(
        default=DEFAULT_HOARE_TOL,
        description="Margin below which a Löwner comparison refutes a triple.",
    )
    zero_mass: float = DEFAULT_ZERO_MASS

    # ── Loops and exploration ────────────────────────────────────────
    loop_tol: float = DEFAULT_LOOP_TOL
    loop_max: int = DEFAULT_LOOP_MAX
    max_steps: int = DEFAULT_MAX_STEPS
    prune: float = Field(
        default=0.0,
        description="Branches whose mass falls below this are discarded (0 keeps everything).",
    )

    # ── Sampling ─────────────────────────────────────────────────────
    samples: int = DEFAULT_SAMPLES
    seed: int = 0
    threads: int = Field(default_factory=_threads_from_env)

    # Output
    output_format: str = "text"  # text | json | yaml
    verbose: bool = False

    def validate_tolerances(self) -> None:
        for name in ("linalg_tol", "hermitian_tol", "hoare_tol", "loop_tol", "zero_mass"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.prune < 0:
            raise ValueError(f"prune must be non-negative, got {self.prune}")
        if self.threads < 1:
            raise ValueError(f"threads must be at least 1, got {self.threads}")
        if self.loop_max < 1 or self.max_steps < 1:
            raise ValueError("loop_max and max_steps must be at least 1")
        if self.output_format not in ("text", "json", "yaml"):
            raise ValueError(f"unknown output format {self.output_format!r}")
