"""Run one of the fracture benchmarks with a chosen nonlinear solver."""

from __future__ import annotations

import argparse
import logging
from collections.abc import Sequence
from pathlib import Path

from pydantic import ValidationError

from spinfrac.benchmarks import BENCHMARKS, get_benchmark
from spinfrac.config import get_settings
from spinfrac.driver import SolverConfig, report_path, run_benchmark
from spinfrac.solvers import AmConfig, MonolithicConfig, NewtonConfig, SpinConfig

logger = logging.getLogger("run_benchmark")

SOLVERS = [
    "am",
    "am-nd",
    "am-nk",
    "am-ink",
    "am-st",
    "spin",
    "aspin",
    "mspin",
    "newton-nd",
    "newton-nk",
    "newton-ink",
]


def str_to_bool(value: str) -> bool:
    """Parse the ``true``/``false`` values of the solver flags."""
    lowered = value.lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"Expected true or false, got {value!r}.")


def get_parser() -> argparse.ArgumentParser:
    """Get parser for command line arguments."""
    parser = argparse.ArgumentParser(
        formatter_class=argparse.ArgumentDefaultsHelpFormatter
    )
    parser.add_argument(
        "--benchmark",
        type=str,
        default="tension",
        choices=list(BENCHMARKS),
        help="Benchmark to run.",
    )
    parser.add_argument(
        "--solver",
        type=str,
        default="mspin",
        choices=SOLVERS,
        help=(
            "Nonlinear solver. 'am' and 'spin' take their variant from the"
            " -snes_am_* and -snes_spin_additive flags."
        ),
    )
    parser.add_argument(
        "--mesh-scale",
        type=float,
        default=1.0,
        help="Refine (> 1) or coarsen (< 1) the benchmark mesh.",
    )
    parser.add_argument(
        "--length-scale",
        type=float,
        default=None,
        help="Override the length scale l_s in mm, the band mesh follows.",
    )
    parser.add_argument(
        "--out",
        type=Path,
        default=None,
        help="Output directory. Defaults to SPINFRAC__OUTPUT__DIRECTORY.",
    )
    parser.add_argument(
        "--steps",
        type=int,
        default=None,
        help="Stop after this many loading steps.",
    )
    parser.add_argument(
        "--vtk-every",
        type=int,
        default=None,
        help="Write a VTK snapshot every n steps, 0 disables them.",
    )
    parser.add_argument(
        "--export-matrices",
        action="store_true",
        help="Write the monolithic Jacobian of the first step (MatrixMarket).",
    )
    parser.add_argument(
        "--dump-mesh",
        action="store_true",
        help="Write the mesh as VTK before solving.",
    )
    snes = parser.add_argument_group("nonlinear solver flags")
    snes.add_argument(
        "-snes_atol", type=float, default=1e-7, help="Absolute residual tolerance."
    )
    snes.add_argument(
        "-snes_stol",
        type=float,
        default=1e-8,
        help="Correction tolerance ||alpha p|| <= stol ||x||, 0 disables it.",
    )
    snes.add_argument(
        "-snes_rtol", type=float, default=1e-6, help="Relative residual tolerance."
    )
    snes.add_argument(
        "-snes_max_it", type=int, default=50000, help="Maximum global iterations."
    )
    snes.add_argument(
        "-snes_am_c_diff_tol",
        type=float,
        default=1e-4,
        help="Phase-field change tolerance of AM-ST.",
    )
    snes.add_argument(
        "-snes_am_disp_diff_tol",
        type=float,
        default=1e-12,
        help="Displacement change tolerance of AM-ST.",
    )
    snes.add_argument(
        "-snes_am_inexact_solve",
        type=str_to_bool,
        default=True,
        help="Solve subproblem Newton systems inexactly (INK).",
    )
    snes.add_argument(
        "-snes_am_direct_solver",
        type=str_to_bool,
        default=False,
        help="Solve subproblem Newton systems with a direct solver (ND).",
    )
    snes.add_argument(
        "-snes_spin_additive",
        type=str_to_bool,
        default=True,
        help="Additive (ASPIN) rather than multiplicative (MSPIN) coupling.",
    )
    snes.add_argument(
        "-snes_spin_action_rtol",
        type=float,
        default=1e-4,
        help="Relative tolerance of the inner solves applying the SPIN operator.",
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="store_true",
        help="Control verbosity",
    )
    return parser


def solver_config(args: argparse.Namespace) -> SolverConfig:
    """Translate the parsed flags into a solver configuration.

    Raises
    ------
    pydantic.ValidationError
        If the flags violate a constraint of the configuration.
    """
    if args.snes_am_direct_solver:
        sub_variant = "ND"
    elif args.snes_am_inexact_solve:
        sub_variant = "INK"
    else:
        sub_variant = "NK"
    tolerances = {
        "eps_abs_glob_nonl": args.snes_atol,
        "eps_rel_glob_nonl": args.snes_rtol,
        "max_outer_iters": args.snes_max_it,
        "stol": args.snes_stol,
    }
    name = args.solver
    if name.startswith("am"):
        variant = sub_variant if name == "am" else name[3:].upper()
        return AmConfig(
            variant=variant,
            eps_c_diff=args.snes_am_c_diff_tol,
            disp_diff_tol=args.snes_am_disp_diff_tol,
            **tolerances,
        )
    if name.endswith("spin"):
        additive = args.snes_spin_additive if name == "spin" else name == "aspin"
        return SpinConfig(
            mode="additive" if additive else "multiplicative",
            eps_app_lin=args.snes_spin_action_rtol,
            subproblem=NewtonConfig(variant=sub_variant),
            **tolerances,
        )
    return MonolithicConfig(variant=name[7:].upper(), **tolerances)


def main(argv: Sequence[str] | None = None) -> int:
    """Run the main logic."""
    parser = get_parser()
    args = parser.parse_args(argv)

    logging_level = logging.INFO if args.verbose else logging.WARNING

    # setup logging
    logging.basicConfig(
        format="[%(levelname)s]  %(asctime)s %(name)s  %(message)s", level=logging_level
    )
    settings = get_settings()
    if args.verbose:
        # SPINFRAC__LOGGING__LEVEL=debug adds the inner solver traces.
        level = logging.getLevelName(settings.logging.level.upper())
        logging.getLogger("spinfrac").setLevel(min(logging.INFO, level))
    logging.getLogger("meshio").setLevel(settings.logging.external_packages.upper())

    if args.steps is not None and args.steps < 0:
        parser.error("--steps must be nonnegative.")
    try:
        config = solver_config(args)
        spec = get_benchmark(args.benchmark, args.mesh_scale)
        if args.length_scale is not None:
            spec = spec.with_length_scale(args.length_scale)
    except (ValidationError, ValueError) as err:
        parser.error(str(err))

    out = settings.output.directory if args.out is None else args.out
    report = run_benchmark(
        spec,
        config,
        steps=args.steps,
        out=out,
        vtk_every=args.vtk_every,
        export_matrices=args.export_matrices,
        dump_mesh=args.dump_mesh,
    )
    if report.failed:
        logger.error(f"{report.solver} failed on {report.benchmark}: {report.error}")
        return 1
    logger.info(f"Report written to {report_path(out, spec, config)}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
