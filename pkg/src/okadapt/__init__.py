"""Adaptive time stepping for the local and nonlocal Cahn-Hilliard equations."""

from .adaptivity import PRESETS, ControllerGains, StepHistory, Tolerances, bdf2_error, decide, preset, propose_dt, wlte
from .driver import FixedStep, InitialCondition, RejectStorm, RunAborted, RunConfig, RunReport, StepRecord, run
from .grid import GridSpec
from .model import PhysicalParams, State, free_energy
from .solver import NonConvergence, SolverSettings, solve_step

__version__ = "0.1.0"
