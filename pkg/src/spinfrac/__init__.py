"""Spinfrac: phase-field fracture with alternate minimization and SPIN solvers."""

__version__ = "0.1.0"
