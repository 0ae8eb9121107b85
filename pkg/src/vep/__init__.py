"""Toolkit for programs whose constraints are the strong solutions of a
parametric vector-order feasibility system: merit functions, error-bound
certificates, constant estimation, a penalization solver and stationarity
checks."""

__version__ = "0.1.0"

from . import diagnostics, expr, geometry, merit, problem, solver, subdiff  # noqa: F401
