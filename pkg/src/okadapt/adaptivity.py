"""Step-size control by feedback on an extrapolated local error estimate.

The error of the second-order step is estimated by comparing it with a
backward-Euler step reconstructed from three stored solutions.  A weighted
RMS norm of that estimate, ``r``, is fed to a controller of the form

    dt_new = rho (r_n/r_new)^kP (1/r_new)^kI (r_n^2/(r_new r_nm1))^kD (dt_n/dt_nm1)^kT dt_n

and a step is accepted when ``r <= 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

R_FLOOR = 1e-12
REJECT_SHRINK = 0.9


@dataclass(frozen=True)
class ControllerGains:
    kP: float
    kI: float
    kD: float
    kT: float
    rho: float = 0.9
    name: str = "custom"

    def __post_init__(self):
        if not 0 < self.rho <= 1:
            raise ValueError(f"safety factor rho must lie in (0, 1], got {self.rho}")


PRESETS = {
    "i": ControllerGains(0.0, 0.5, 0.0, 0.0, name="I"),
    "pid": ControllerGains(0.075, 0.175, 0.01, 0.0, name="PID"),
    "pc11": ControllerGains(0.333, 0.333, 0.0, 1.0, name="PC11"),
}


def preset(name: str, rho: float = 0.9) -> ControllerGains:
    try:
        base = PRESETS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown controller {name!r}; choose from {sorted(PRESETS)}") from None
    return ControllerGains(base.kP, base.kI, base.kD, base.kT, rho, base.name)


@dataclass(frozen=True)
class Tolerances:
    tau_abs: float = 1e-4
    tau_rel: float = 1e-4
    dt_min: float = 1e-12
    dt_max: float = 5e-3
    dt0: float = 1e-9
    growth_cap: float | None = 5.0

    def __post_init__(self):
        if not (self.tau_abs > 0 and self.tau_rel > 0):
            raise ValueError("tau_abs and tau_rel must be positive")
        if not 0 < self.dt_min <= self.dt0 <= self.dt_max:
            raise ValueError(
                f"need 0 < dt_min <= dt0 <= dt_max, got dt_min={self.dt_min}, "
                f"dt0={self.dt0}, dt_max={self.dt_max}"
            )
        if self.growth_cap is not None and not self.growth_cap >= 1:
            raise ValueError("growth_cap must be >= 1")

    def clamp(self, dt: float) -> float:
        return min(max(dt, self.dt_min), self.dt_max)


@dataclass
class StepHistory:
    """Errors and sizes of the last two accepted steps (oldest first)."""

    r_prev2: float = 1.0
    r_prev: float = 1.0
    dt_prev2: float = math.nan
    dt_prev: float = math.nan
    seeded: bool = field(default=False)

    @classmethod
    def seed(cls, dt0: float) -> StepHistory:
        return cls(1.0, 1.0, dt0, dt0, seeded=True)

    def push(self, r: float, dt: float) -> None:
        self.r_prev2, self.r_prev = self.r_prev, max(r, R_FLOOR)
        self.dt_prev2, self.dt_prev = self.dt_prev, dt


def bdf2_error(phi_next, phi_n, phi_prev, dt_next: float, dt_n: float) -> np.ndarray:
    """Backward-Euler truncation error reconstructed by variable-step BDF extrapolation."""
    if not (dt_next > 0 and dt_n > 0):
        raise ValueError("step sizes must be positive")
    eta = (dt_next + dt_n) / dt_next
    if eta <= 1.0 + 1e-14:
        raise ValueError(f"degenerate step ratio (eta={eta!r})")
    return (
        -np.asarray(phi_next) / eta
        + np.asarray(phi_n) / (eta - 1.0)
        - np.asarray(phi_prev) / (eta * (eta - 1.0))
    )


def wlte(error, phi_next, tol: Tolerances) -> float:
    """Weighted RMS of the error estimate; ``<= 1`` means within tolerance."""
    error = np.asarray(error, dtype=float)
    phi_next = np.asarray(phi_next, dtype=float)
    weight = tol.tau_abs + tol.tau_rel * np.maximum(np.abs(phi_next), np.abs(phi_next + error))
    return float(np.sqrt(np.mean((error / weight) ** 2)))


def propose_dt(gains: ControllerGains, hist: StepHistory, r_new: float, dt_cur: float, tol: Tolerances) -> float:
    """Next step size after a step of size ``dt_cur`` produced error ``r_new``.

    ``hist`` holds the accepted steps *before* the current one.
    """
    r1 = max(r_new, R_FLOOR)
    r0 = max(hist.r_prev, R_FLOOR)
    rm = max(hist.r_prev2, R_FLOOR)
    factor = (
        gains.rho
        * (r0 / r1) ** gains.kP
        * (1.0 / r1) ** gains.kI
        * (r0 * r0 / (r1 * rm)) ** gains.kD
    )
    if gains.kT:
        factor *= (dt_cur / hist.dt_prev) ** gains.kT
    if tol.growth_cap is not None:
        factor = min(factor, tol.growth_cap)
    return tol.clamp(factor * dt_cur)


def retry_dt(gains: ControllerGains, hist: StepHistory, r_new: float, dt_attempted: float, tol: Tolerances) -> float:
    """Step size for retrying a rejected attempt; always strictly smaller unless at ``dt_min``."""
    dt = min(propose_dt(gains, hist, r_new, dt_attempted, tol), REJECT_SHRINK * dt_attempted)
    return max(dt, tol.dt_min)


def decide(r_new: float) -> bool:
    """Accept iff the weighted error is within tolerance."""
    return r_new <= 1.0
