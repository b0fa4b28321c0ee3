"""Records of a benchmark run."""

from __future__ import annotations

from pydantic import BaseModel, Field, model_validator

from spinfrac.solvers.base import SolveStats

CSV_COLUMNS = (
    "step",
    "time",
    "E_elastic",
    "E_fracture",
    "E_penalty",
    "Psi",
    "nl_global",
    "nl_u",
    "nl_c",
    "lin_u",
    "lin_c",
    "krylov_global",
    "reaction",
)


class StepRecord(BaseModel):
    """Energies and iteration counts of one accepted loading step."""

    step: int = Field(ge=1)
    time: float
    E_elastic: float
    E_fracture: float
    E_penalty: float
    Psi: float
    nl_global: int = 0
    nl_u: int = 0
    nl_c: int = 0
    lin_u: int = 0
    lin_c: int = 0
    krylov_global: int = 0
    reaction: float = 0.0

    # Not written to the CSV
    healing: float = 0.0
    c_min: float = 0.0
    c_max: float = 0.0
    stats: SolveStats | None = None

    def csv_row(self) -> dict[str, float | int]:
        """Values of the CSV columns."""
        return {column: getattr(self, column) for column in CSV_COLUMNS}


class RunTotals(BaseModel):
    """Iteration counts accumulated over all steps of a run."""

    steps: int = 0
    nl_global: int = 0
    nl_u: int = 0
    nl_c: int = 0
    lin_u: int = 0
    lin_c: int = 0
    krylov_global: int = 0
    krylov_per_nonlinear: float = 0.0


class RunReport(BaseModel):
    """Outcome of a benchmark run, possibly cut short by a solver failure."""

    benchmark: str
    solver: str
    dofs: int = 0
    records: list[StepRecord] = []
    failed: bool = False
    error: str | None = None
    wall_time: float = 0.0

    @model_validator(mode="after")
    def check_order(self) -> RunReport:
        """Steps must be strictly increasing in time."""
        times = [record.time for record in self.records]
        if any(b <= a for a, b in zip(times[:-1], times[1:])):
            raise ValueError("Step records are not ordered by time.")
        return self

    def totals(self) -> RunTotals:
        """Accumulated counts and mean Krylov iterations per global iteration."""
        totals = RunTotals(steps=len(self.records))
        for name in (
            "nl_global",
            "nl_u",
            "nl_c",
            "lin_u",
            "lin_c",
            "krylov_global",
        ):
            setattr(totals, name, sum(getattr(r, name) for r in self.records))
        if totals.nl_global:
            totals.krylov_per_nonlinear = totals.krylov_global / totals.nl_global
        return totals
