"""Newton-Krylov solution of the per-step coupled system.

The linear systems are solved matrix-free with restarted GMRES.  Every
inner Krylov iteration is counted, including those spent in Newton solves
that end up failing, since the total is the cost metric used to compare
step-size controllers.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .grid import GridSpec
from .model import PhysicalParams, State, _jacobian_apply, _residual, psi_tilde_prime_da

logger = logging.getLogger(__name__)

ABS_FLOOR = 1e-12


@dataclass(frozen=True)
class SolverSettings:
    newton_rtol: float = 1e-5
    newton_stol: float = 1e-8
    lin_rtol: float = 1e-5
    lin_atol: float = 1e-8
    max_newton: int = 30
    max_lin: int = 2000
    restart: int = 50
    preconditioner: Literal["spectral", "diagonal", "none"] = "spectral"

    def __post_init__(self):
        for name in ("newton_rtol", "newton_stol", "lin_rtol", "lin_atol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_newton < 0 or self.max_lin < 1 or self.restart < 1:
            raise ValueError("iteration caps must be positive")
        if self.preconditioner not in ("spectral", "diagonal", "none"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass
class SolveStats:
    newton_iters: int = 0
    linear_iters: int = 0
    converged: bool = False
    final_residual_norm: float = math.nan
    residual_history: tuple[float, ...] = ()


class NonConvergence(RuntimeError):
    """Newton or the inner linear solver failed; carries the spent effort."""

    def __init__(self, message: str, stats: SolveStats):
        super().__init__(message)
        self.stats = stats


def _spectral_preconditioner(grid, coeff, dt, params):
    """Exact inverse of the Jacobian with ``coeff`` frozen to its clipped mean.

    Per Laplacian eigenvalue ``lam`` the 2x2 block
    ``[[a, -M lam], [-c + eps^2 lam/2, 1]]`` is inverted in closed form.
    """
    basis = grid.spectral
    lam = basis.eigenvalues
    a = 1.0 / dt + 0.5 * params.sigma
    c = max(float(np.mean(coeff)), 0.0)
    m = params.mobility
    off = c - 0.5 * params.epsilon**2 * lam
    det = a + m * lam * (0.5 * params.epsilon**2 * lam - c)
    n = grid.size

    def apply(x):
        f_phi = basis.forward(x[:n].reshape(grid.shape))
        f_mu = basis.forward(x[n:].reshape(grid.shape))
        d_phi = basis.inverse((f_phi + m * lam * f_mu) / det)
        d_mu = basis.inverse((off * f_phi + a * f_mu) / det)
        return np.concatenate([d_phi.ravel(), d_mu.ravel()])

    return apply


def _diagonal_preconditioner(grid, coeff, dt, params):
    n = grid.size
    # Jacobi scaling: the (phi, phi) block diagonal is 1/dt + sigma/2, the (mu, mu) one is 1
    scale = np.concatenate([np.full(n, 1.0 / (1.0 / dt + 0.5 * params.sigma)), np.ones(n)])
    return lambda x: scale * x


def solve_step(
    grid: GridSpec,
    prev: State,
    guess: State,
    dt: float,
    params: PhysicalParams,
    settings: SolverSettings = SolverSettings(),
) -> tuple[State, SolveStats]:
    """Advance ``prev`` by ``dt``; raises :class:`NonConvergence` on failure."""
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    grid.check(guess.phi)
    grid.check(prev.phi)
    n = grid.size
    phi0 = prev.phi
    x = np.concatenate([guess.phi.ravel(), guess.mu.ravel()]).astype(float)

    def split(vec):
        return vec[:n].reshape(grid.shape), vec[n:].reshape(grid.shape)

    def res(vec):
        r_phi, r_mu = _residual(grid, *split(vec), phi0, dt, params)
        return np.concatenate([r_phi.ravel(), r_mu.ravel()])

    stats = SolveStats()
    r = res(x)
    norm = float(np.linalg.norm(r))
    history = [norm]
    target = max(settings.newton_rtol * norm, ABS_FLOOR)

    def finish(converged):
        stats.converged = converged
        stats.final_residual_norm = history[-1]
        stats.residual_history = tuple(history)
        return stats

    stagnated = False
    while not (norm <= target or stagnated):
        if stats.newton_iters >= settings.max_newton:
            raise NonConvergence(
                f"Newton did not converge in {settings.max_newton} iterations "
                f"(residual {norm:.3e}, target {target:.3e})",
                finish(False),
            )
        coeff = psi_tilde_prime_da(split(x)[0], phi0)

        def matvec(v, coeff=coeff):
            j_phi, j_mu = _jacobian_apply(grid, coeff, dt, params, *split(v))
            return np.concatenate([j_phi.ravel(), j_mu.ravel()])

        op = LinearOperator((2 * n, 2 * n), matvec=matvec, dtype=float)
        precond = None
        if settings.preconditioner == "spectral":
            precond = LinearOperator((2 * n, 2 * n), _spectral_preconditioner(grid, coeff, dt, params))
        elif settings.preconditioner == "diagonal":
            precond = LinearOperator((2 * n, 2 * n), _diagonal_preconditioner(grid, coeff, dt, params))

        inner = 0

        def count(_):
            nonlocal inner
            inner += 1

        restart = min(settings.restart, settings.max_lin)
        delta, info = gmres(
            op,
            -r,
            rtol=settings.lin_rtol,
            atol=settings.lin_atol,
            restart=restart,
            maxiter=math.ceil(settings.max_lin / restart),
            M=precond,
            callback=count,
            callback_type="pr_norm",
        )
        stats.newton_iters += 1
        stats.linear_iters += inner
        if info != 0:
            raise NonConvergence(f"GMRES stalled after {inner} iterations", finish(False))
        x = x + delta
        r = res(x)
        norm = float(np.linalg.norm(r))
        history.append(norm)
        if not math.isfinite(norm):
            raise NonConvergence("Newton iterate is not finite", finish(False))
        # relative step test: the residual cannot be driven below round-off
        stagnated = np.linalg.norm(delta) <= settings.newton_stol * np.linalg.norm(x)

    phi1, mu1 = split(x)
    return State(phi1.copy(), mu1.copy(), prev.time + dt), finish(True)
