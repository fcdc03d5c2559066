"""Ohta-Kawasaki physics on a structured grid.

The unknowns are the phase field ``phi`` and the chemical potential ``mu``.
One time step of the second-order energy-stable scheme solves

    R_phi = (phi1 - phi0)/dt - M lap(mu1) + sigma ((phi1 + phi0)/2 - phi_bar) = 0
    R_mu  = mu1 - psi_tilde_prime(phi1, phi0) + eps^2 lap((phi1 + phi0)/2)  = 0

for ``(phi1, mu1)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridError, GridSpec


def psi(x):
    """Double-well bulk energy ``(x^2 - 1)^2 / 4``."""
    return 0.25 * (x * x - 1.0) ** 2


def psi_d1(x):
    return x * x * x - x


def psi_d2(x):
    return 3.0 * x * x - 1.0


def psi_d3(x):
    return 6.0 * x


def psi_tilde_prime(a, b):
    """Taylor approximation of ``psi'`` expanded about the new value ``a``.

    ``psi_tilde_prime(a, b) * (a - b) - (psi(a) - psi(b)) == (a - b)**4 / 4``
    for the quartic well, which is what makes the scheme energy stable.
    """
    jump = a - b
    return psi_d1(a) - psi_d2(a) * jump / 2.0 + psi_d3(a) * jump * jump / 6.0


def psi_tilde_prime_da(a, b):
    """Partial derivative of :func:`psi_tilde_prime` with respect to ``a``."""
    jump = a - b
    # psi'' - (psi''' jump + psi'')/2 + (psi'''' jump^2 + 2 psi''' jump)/6, psi'''' = 6
    return psi_d2(a) / 2.0 - psi_d3(a) * jump / 6.0 + jump * jump


@dataclass(frozen=True)
class PhysicalParams:
    """Coefficients of the nonlocal Cahn-Hilliard equation."""

    epsilon: float = 0.1
    sigma: float = 0.0
    phi_bar: float = 0.0
    mobility: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not self.mobility > 0:
            raise ValueError(f"mobility must be positive, got {self.mobility}")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        if not -1.0 < self.phi_bar < 1.0:
            raise ValueError(f"phi_bar must lie in (-1, 1), got {self.phi_bar}")


@dataclass
class State:
    phi: np.ndarray
    mu: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        if np.shape(self.phi) != np.shape(self.mu):
            raise GridError("phi and mu live on different grids")

    def copy(self) -> State:
        return State(self.phi.copy(), self.mu.copy(), self.time)


def chemical_potential(grid: GridSpec, phi: np.ndarray, params: PhysicalParams) -> np.ndarray:
    """Consistent initial ``mu = psi'(phi) - eps^2 lap(phi)``."""
    return psi_d1(phi) - params.epsilon**2 * grid.laplacian(phi)


def _check_pair(grid: GridSpec, nxt: State, prev: State, dt: float) -> None:
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    for f in (nxt.phi, nxt.mu, prev.phi, prev.mu):
        grid.check(f)


def residual(grid: GridSpec, nxt: State, prev: State, dt: float, params: PhysicalParams):
    """Nodal residuals ``(R_phi, R_mu)`` of one time step."""
    _check_pair(grid, nxt, prev, dt)
    return _residual(grid, nxt.phi, nxt.mu, prev.phi, dt, params)


def _residual(grid, phi1, mu1, phi0, dt, params):
    mid = 0.5 * (phi1 + phi0)
    r_phi = (phi1 - phi0) / dt - params.mobility * grid.laplacian(mu1)
    if params.sigma:
        r_phi += params.sigma * (mid - params.phi_bar)
    r_mu = mu1 - psi_tilde_prime(phi1, phi0) + params.epsilon**2 * grid.laplacian(mid)
    return r_phi, r_mu


def jacobian_apply(grid: GridSpec, nxt: State, prev: State, dt: float, params: PhysicalParams, direction):
    """Action of the exact Jacobian of :func:`residual` w.r.t. ``(phi1, mu1)``."""
    _check_pair(grid, nxt, prev, dt)
    d_phi, d_mu = (grid.check(d) for d in direction)
    coeff = psi_tilde_prime_da(nxt.phi, prev.phi)
    return _jacobian_apply(grid, coeff, dt, params, d_phi, d_mu)


def _jacobian_apply(grid, coeff, dt, params, d_phi, d_mu):
    j_phi = (1.0 / dt + 0.5 * params.sigma) * d_phi - params.mobility * grid.laplacian(d_mu)
    j_mu = d_mu - coeff * d_phi + 0.5 * params.epsilon**2 * grid.laplacian(d_phi)
    return j_phi, j_mu


class PoissonError(RuntimeError):
    pass


def poisson_solve(grid: GridSpec, rhs: np.ndarray, rtol: float = 1e-10, maxiter: int = 20) -> np.ndarray:
    """Solve ``-lap(v) = rhs - mean(rhs)`` with the gauge ``mean(v) = 0``.

    Uses the exact spectral inverse as a preconditioner inside an iterative
    refinement loop, stopping at relative residual ``rtol``.
    """
    rhs = grid.check(rhs).astype(float)
    rhs = rhs - grid.mean(rhs)
    basis = grid.spectral
    eig = basis.eigenvalues
    inv = np.zeros_like(eig)
    np.divide(-1.0, eig, out=inv, where=eig != 0)

    def apply_inverse(r):
        v = basis.inverse(inv * basis.forward(r))
        return v - grid.mean(v)

    scale = np.linalg.norm(rhs)
    v = np.zeros_like(rhs)
    if scale == 0:
        return v
    for _ in range(maxiter):
        res = rhs + grid.laplacian(v)
        res -= grid.mean(res)
        if np.linalg.norm(res) <= rtol * scale:
            return v
        v += apply_inverse(res)
    raise PoissonError(f"Poisson solve did not reach rtol={rtol} in {maxiter} iterations")


def free_energy(grid: GridSpec, phi: np.ndarray, params: PhysicalParams) -> float:
    """Discrete Ohta-Kawasaki energy of ``phi``."""
    phi = grid.check(phi)
    energy = grid.integrate(psi(phi)) + 0.5 * params.epsilon**2 * grid.grad_norm_sq_integral(phi)
    if params.sigma:
        u = phi - params.phi_bar
        v = poisson_solve(grid, u)
        energy += 0.5 * params.sigma * grid.integrate(u * v)
    return energy
