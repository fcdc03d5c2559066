"""Time marching: attempt, solve, estimate, decide, advance or retry."""

from __future__ import annotations

import logging
import math
import time as _time
from dataclasses import dataclass, field, replace
from typing import Callable, Literal, Sequence

import numpy as np

from .adaptivity import (
    ControllerGains,
    StepHistory,
    Tolerances,
    bdf2_error,
    decide,
    preset,
    propose_dt,
    retry_dt,
    wlte,
)
from .grid import GridSpec
from .model import PhysicalParams, State, chemical_potential, free_energy
from .solver import NonConvergence, SolverSettings, solve_step

logger = logging.getLogger(__name__)

FAILED_SOLVE_SHRINK = 0.5


@dataclass(frozen=True)
class FixedStep:
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("fixed step size must be positive")

    name = "fixed"


@dataclass(frozen=True)
class InitialCondition:
    """``random``: uniform noise of the given amplitude; ``smooth``: a few low cosine modes."""

    mean: float = 0.0
    amplitude: float = 0.05
    seed: int = 0
    kind: Literal["random", "smooth"] = "random"

    def __post_init__(self):
        if not self.amplitude >= 0:
            raise ValueError("perturbation amplitude must be non-negative")
        if self.kind not in ("random", "smooth"):
            raise ValueError(f"unknown initial condition kind {self.kind!r}")


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec
    params: PhysicalParams
    t_end: float
    ic: InitialCondition = InitialCondition()
    solver: SolverSettings = SolverSettings()
    tol: Tolerances = Tolerances()
    gains: ControllerGains | FixedStep = field(default_factory=lambda: preset("pc11"))
    snapshot_times: tuple[float, ...] = ()
    steady_state_eps: float | None = None
    max_rejects_per_step: int = 20

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.max_rejects_per_step < 0:
            raise ValueError("max_rejects_per_step must be non-negative")

    @property
    def controller_name(self) -> str:
        return self.gains.name


@dataclass
class StepRecord:
    step_index: int
    attempt_index: int
    time: float
    dt: float
    r: float
    accepted: bool
    newton_iters: int
    linear_iters: int
    free_energy: float
    mass: float


@dataclass
class RunReport:
    records: list[StepRecord]
    wall_time: float = 0.0
    status: str = "completed"
    final_state: State | None = None
    initial_mass: float = math.nan
    forced_steps: list[int] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def accepted(self) -> list[StepRecord]:
        return [rec for rec in self.records if rec.accepted]

    @property
    def accepted_count(self) -> int:
        return sum(rec.accepted for rec in self.records)

    @property
    def rejected_count(self) -> int:
        return len(self.records) - self.accepted_count

    @property
    def total_linear(self) -> int:
        return sum(rec.linear_iters for rec in self.records)

    @property
    def total_newton(self) -> int:
        return sum(rec.newton_iters for rec in self.records)

    @property
    def avg_newton(self) -> float:
        return self.total_newton / len(self.records) if self.records else 0.0

    @property
    def avg_linear(self) -> float:
        return self.total_linear / len(self.records) if self.records else 0.0

    def summary(self) -> dict:
        return {
            "status": self.status,
            "accepted": self.accepted_count,
            "rejected": self.rejected_count,
            "avg_newton": self.avg_newton,
            "avg_linear": self.avg_linear,
            "total_linear": self.total_linear,
            "wall_time": self.wall_time,
            "final_time": self.final_state.time if self.final_state is not None else math.nan,
            "forced_steps": list(self.forced_steps),
            "warnings": list(self.warnings),
        }


class RunAborted(RuntimeError):
    """The run stopped early; ``report`` holds everything done so far."""

    def __init__(self, message: str, report: RunReport):
        super().__init__(message)
        self.report = report


class RejectStorm(RunAborted):
    pass


def make_initial_condition(grid: GridSpec, ic: InitialCondition) -> np.ndarray:
    if ic.kind == "random":
        rng = np.random.default_rng(ic.seed)
        noise = rng.uniform(-1.0, 1.0, size=grid.shape)
    else:
        # Neumann-compatible on no-flux grids, periodic otherwise
        k = 2 * np.pi if grid.periodic else np.pi
        x = [c / L for c, L in zip(grid.coordinates(), grid.lengths)]
        noise = np.prod([np.cos(k * xi) for xi in x], axis=0)
        noise += 0.5 * np.cos(2 * k * x[0]) + 0.3 * np.cos(k * x[1])
    if ic.amplitude == 0:
        return np.full(grid.shape, float(ic.mean))
    phi = ic.mean + ic.amplitude * noise
    return phi - (grid.mean(phi) - ic.mean)


def detect_steady_state(prev: np.ndarray, nxt: np.ndarray, dt: float, eps: float) -> bool:
    if not dt > 0:
        raise ValueError("time step must be positive")
    return float(np.max(np.abs(nxt - prev))) / dt < eps


def run(
    cfg: RunConfig,
    on_record: Callable[[StepRecord], None] | None = None,
    on_snapshot: Callable[[float, float, np.ndarray], None] | None = None,
) -> RunReport:
    """Integrate ``cfg`` to ``t_end`` (or steady state).

    ``on_snapshot(requested_time, actual_time, phi)`` fires at the first
    accepted step reaching each requested snapshot time.
    """
    grid, tol = cfg.grid, cfg.tol
    fixed = isinstance(cfg.gains, FixedStep)
    started = _time.perf_counter()

    phi0 = make_initial_condition(grid, cfg.ic)
    # the mean is frozen from the discrete initial condition
    params = replace(cfg.params, phi_bar=grid.mean(phi0))
    state = State(phi0, chemical_potential(grid, phi0, params), 0.0)
    phi_prev: np.ndarray | None = None
    dt_last = math.nan
    report = RunReport(records=[], initial_mass=params.phi_bar)
    pending_snapshots = sorted(cfg.snapshot_times)
    if on_snapshot is not None:
        while pending_snapshots and pending_snapshots[0] <= 0.0:
            on_snapshot(pending_snapshots.pop(0), 0.0, phi0)

    hist = StepHistory.seed(tol.dt0)
    dt = cfg.gains.dt if fixed else tol.dt0
    t_stop = cfg.t_end * (1 - 1e-12)
    step_index = 0

    def log(rec: StepRecord) -> None:
        report.records.append(rec)
        if on_record is not None:
            on_record(rec)

    def abort(exc_type, message):
        report.status = "aborted"
        report.final_state = state
        report.wall_time = _time.perf_counter() - started
        raise exc_type(message, report)

    while state.time < t_stop:
        step_index += 1
        attempt = 0
        while True:
            dt_try = min(dt, cfg.t_end - state.time)
            try:
                new, stats = solve_step(grid, state, state, dt_try, params, cfg.solver)
            except NonConvergence as exc:
                log(StepRecord(step_index, attempt, state.time + dt_try, dt_try, math.nan, False,
                               exc.stats.newton_iters, exc.stats.linear_iters, math.nan, math.nan))
                if fixed or dt_try <= tol.dt_min * (1 + 1e-12):
                    abort(RunAborted, f"nonlinear solver failed at t={state.time:.6g}, dt={dt_try:.3g}: {exc}")
                dt = max(FAILED_SOLVE_SHRINK * dt_try, tol.dt_min)
            else:
                if fixed or phi_prev is None:
                    r, accept = math.nan, True
                    if not fixed:
                        report.forced_steps.append(step_index)
                else:
                    r = wlte(bdf2_error(new.phi, state.phi, phi_prev, dt_try, dt_last), new.phi, tol)
                    accept = decide(r)
                    if not accept and dt_try <= tol.dt_min * (1 + 1e-12):
                        accept = True
                        report.forced_steps.append(step_index)
                        msg = f"step {step_index} force-accepted at dt_min with r={r:.3g}"
                        report.warnings.append(msg)
                        logger.warning(msg)
                log(StepRecord(step_index, attempt, new.time, dt_try, r, accept, stats.newton_iters,
                               stats.linear_iters, free_energy(grid, new.phi, params), grid.mean(new.phi)))
                if accept:
                    break
                dt = retry_dt(cfg.gains, hist, r, dt_try, tol)
            attempt += 1
            if attempt > cfg.max_rejects_per_step:
                abort(RejectStorm, f"step {step_index} rejected {attempt} times")

        if fixed:
            pass
        elif phi_prev is None:
            dt = tol.dt0
        else:
            dt = propose_dt(cfg.gains, hist, r, dt_try, tol)
            hist.push(r, dt_try)
        phi_prev, dt_last, state = state.phi, dt_try, new

        while on_snapshot is not None and pending_snapshots and state.time >= pending_snapshots[0] * (1 - 1e-12):
            on_snapshot(pending_snapshots.pop(0), state.time, state.phi)
        if cfg.steady_state_eps is not None and detect_steady_state(phi_prev, state.phi, dt_try, cfg.steady_state_eps):
            report.status = "steady_state"
            break

    report.final_state = state
    report.wall_time = _time.perf_counter() - started
    return report


def temporal_convergence(
    cfg: RunConfig,
    horizon: float,
    divisions: Sequence[int] = (32, 64, 128, 256, 512),
    reference_division: int = 4096,
) -> list[tuple[float, float]]:
    """Fixed-step refinement study; returns ``(dt, l2 error at horizon)`` pairs.

    The error is measured against a run with ``horizon / reference_division``.
    """

    def final_phi(n):
        sub = replace(cfg, t_end=horizon, gains=FixedStep(horizon / n), snapshot_times=(), steady_state_eps=None)
        return run(sub).final_state.phi

    reference = final_phi(reference_division)
    grid = cfg.grid
    out = []
    for n in divisions:
        diff = final_phi(n) - reference
        out.append((horizon / n, math.sqrt(grid.integrate(diff * diff))))
    return out


def observed_orders(errors: Sequence[tuple[float, float]]) -> list[float]:
    return [
        math.log(e0 / e1) / math.log(h0 / h1)
        for (h0, e0), (h1, e1) in zip(errors[:-1], errors[1:])
    ]
