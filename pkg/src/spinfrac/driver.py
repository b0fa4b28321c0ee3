"""Quasi-static loading loop and parameter studies."""

from __future__ import annotations

import logging
import time
from collections.abc import Sequence
from pathlib import Path

import numpy as np
from pydantic import BaseModel

from spinfrac.benchmarks import BenchmarkSpec
from spinfrac.config import get_settings
from spinfrac.io_utils import export_matrix_market, write_csv, write_vtk
from spinfrac.linalg import LinearSolverError
from spinfrac.model import PhaseFieldModel, SystemState
from spinfrac.schemas import RunReport, RunTotals, StepRecord
from spinfrac.solvers import (
    AmConfig,
    MonolithicConfig,
    SolverError,
    SolveStats,
    SpinConfig,
    SpinMode,
    am_solve,
    monolithic_solve,
    spin_solve,
)

logger = logging.getLogger(__name__)

SolverConfig = AmConfig | SpinConfig | MonolithicConfig


def solver_label(config: SolverConfig) -> str:
    """Short name such as ``AM-ST``, ``MSPIN`` or ``Newton-INK``."""
    if isinstance(config, AmConfig):
        return f"AM-{config.variant}"
    if isinstance(config, SpinConfig):
        return config.label
    return f"Newton-{config.variant}"


def solve_step(
    model: PhaseFieldModel, state: SystemState, config: SolverConfig
) -> tuple[SystemState, SolveStats]:
    """Solve one loading step with the solver ``config`` describes."""
    if isinstance(config, AmConfig):
        return am_solve(model, state, config)
    if isinstance(config, SpinConfig):
        return spin_solve(model, state, config)
    if isinstance(config, MonolithicConfig):
        return monolithic_solve(model, state, config)
    raise TypeError(f"Unsupported solver configuration {type(config).__name__}.")


def report_path(out: Path, spec: BenchmarkSpec, config: SolverConfig) -> Path:
    """CSV file of a run inside ``out``."""
    return out / f"{spec.name}_{solver_label(config).lower()}.csv"


def run_benchmark(
    spec: BenchmarkSpec,
    solver: SolverConfig,
    steps: int | None = None,
    out: Path | None = None,
    vtk_every: int | None = None,
    export_matrices: bool = False,
    dump_mesh: bool = False,
) -> RunReport:
    """Run the loading schedule of a benchmark.

    Every step prescribes ``rate * t`` on the loaded node sets, starts from
    the previous converged state, solves, and then freezes the phase field as
    the history of the next step.

    Parameters
    ----------
    spec
        Benchmark to run.
    solver
        AM, SPIN or monolithic Newton settings.
    steps
        Stop after this many steps (the whole schedule if None).
    out
        Directory receiving the CSV report and VTK snapshots. Nothing is
        written if None.
    vtk_every
        Write a snapshot every that many steps, 0 disables them. Defaults to
        the output settings.
    export_matrices
        Write the monolithic Jacobian of the first step in MatrixMarket format.
    dump_mesh
        Write the mesh before solving.

    Returns
    -------
    RunReport
        One record per solved step. A solver failure, or a step that lowers the
        phase field by more than ``tau_irr``, stops the run and is reported
        through ``failed`` and ``error``. A step failing the irreversibility check
        keeps its record.
    """
    if steps is not None:
        spec = spec.truncated(steps)
    vtk_every = get_settings().output.vtk_every if vtk_every is None else vtk_every
    label = solver_label(solver)
    start = time.perf_counter()

    mesh = spec.build_mesh()
    model = PhaseFieldModel.from_mesh(mesh, spec.material)
    state = SystemState.zeros(model.dofmap)
    tau = spec.material.tau_irr
    records: list[StepRecord] = []
    failed, error = False, None
    logger.info(
        f"{spec.name} with {label}: {model.dofmap.size} dofs, {spec.n_steps} steps, "
        f"gamma = {spec.material.gamma:.6g}"
    )
    if out is not None and dump_mesh:
        write_vtk(None, mesh, out / f"{spec.name}_mesh.vtk")

    for step, t in enumerate(spec.times(), start=1):
        model = model.with_dofmap(spec.constraints(model.dofmap, mesh, float(t)))
        state = state.model_copy(update={"t": float(t)}).with_dirichlet(model.dofmap)
        if out is not None and export_matrices and step == 1:
            export_matrix_market(
                model.jacobian(state).monolithic(), out / f"{spec.name}_jacobian.mtx"
            )
        try:
            state, stats = solve_step(model, state, solver)
        except (SolverError, LinearSolverError) as err:
            logger.error(f"{label} failed at step {step} (t = {t:.6g}): {err}")
            failed, error = True, f"step {step}: {err}"
            break

        if not stats.converged:
            logger.warning(
                f"Step {step}: {label} stopped on a small correction with "
                f"||F|| = {stats.residual_norm:.3e} above the residual tolerance."
            )
        healing = float(np.max(state.C_prev - state.C, initial=0.0))
        energies = model.total_energy(state)
        record = StepRecord(
            step=step,
            time=float(t),
            E_elastic=energies.elastic,
            E_fracture=energies.fracture,
            E_penalty=energies.penalty,
            Psi=energies.total,
            nl_global=stats.iterations,
            nl_u=stats.nl_u,
            nl_c=stats.nl_c,
            lin_u=stats.lin_u,
            lin_c=stats.lin_c,
            krylov_global=stats.krylov,
            reaction=model.reaction(state, spec.reaction_set, spec.reaction_component),
            healing=healing,
            c_min=float(state.C.min()),
            c_max=float(state.C.max()),
            stats=stats,
        )
        records.append(record)
        if healing > tau:
            message = f"the phase field decreased by {healing:.3e} > {tau}"
            logger.error(f"Step {step}: {message}.")
            failed, error = True, f"step {step}: {message}"
            break
        logger.info(
            f"Step {step} t = {t:.6g}: {stats.iterations} its ({stats.reason}), "
            f"E_e = {energies.elastic:.6e}, E_f = {energies.fracture:.6e}, "
            f"max c = {record.c_max:.4f}"
        )
        if out is not None and vtk_every and step % vtk_every == 0:
            write_vtk(state, mesh, out / f"{spec.name}_{step:05d}.vtk")
        state = state.model_copy(update={"C_prev": state.C.copy()})

    report = RunReport(
        benchmark=spec.name,
        solver=label,
        dofs=model.dofmap.size,
        records=records,
        failed=failed,
        error=error,
        wall_time=time.perf_counter() - start,
    )
    if out is not None:
        write_csv(report, report_path(out, spec, solver))
    totals = report.totals()
    logger.info(
        f"{spec.name} with {label} finished in {report.wall_time:.1f} s: "
        f"{totals.nl_global} global, {totals.nl_u}/{totals.nl_c} subproblem and "
        f"{totals.lin_u}/{totals.lin_c} linear iterations"
    )
    return report


class StudyEntry(BaseModel):
    """Outcome of one run of a parameter study."""

    value: float
    dofs: int
    failed: bool
    totals: RunTotals


def _entry(value: float, report: RunReport) -> StudyEntry:
    return StudyEntry(
        value=value, dofs=report.dofs, failed=report.failed, totals=report.totals()
    )


def eps_app_lin_study(
    spec: BenchmarkSpec,
    mode: SpinMode,
    values: Sequence[float],
    steps: int | None = None,
    config: SpinConfig | None = None,
) -> list[StudyEntry]:
    """Rerun a benchmark with several inner tolerances of the SPIN operator.

    Values above the stability bound are run as well, so that their effect
    on the global iteration count can be observed.
    """
    base = SpinConfig(mode=mode) if config is None else config
    entries = []
    for value in values:
        solver = base.model_copy(
            update={"mode": mode, "eps_app_lin": value, "check_stability": False}
        )
        entries.append(_entry(value, run_benchmark(spec, solver, steps=steps)))
        logger.info(
            f"{solver.label} eps_app_lin = {value:g}: "
            f"{entries[-1].totals.nl_global} global iterations"
        )
    return entries


def refinement_study(
    spec: BenchmarkSpec,
    solver: SolverConfig,
    scales: Sequence[float],
    steps: int | None = None,
) -> list[StudyEntry]:
    """Rerun a benchmark on meshes refined by each of ``scales``."""
    entries = []
    for scale in scales:
        report = run_benchmark(spec.with_mesh_scale(scale), solver, steps=steps)
        entries.append(_entry(scale, report))
        logger.info(
            f"mesh scale {scale:g}: {report.dofs} dofs, "
            f"{entries[-1].totals.nl_global} global iterations"
        )
    return entries
