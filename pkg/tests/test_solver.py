import numpy as np
import pytest

from okadapt.grid import GridSpec
from okadapt.model import PhysicalParams, State, psi_d1, residual
from okadapt.solver import NonConvergence, SolverSettings, solve_step

from .test_grid import dense_laplacian


def dense_newton(grid, prev, dt, params, iters=20):
    """Direct-solve Newton on the assembled system with a hand-expanded nonlinearity."""
    L = dense_laplacian(grid)
    n = grid.size
    eye = np.eye(n)
    b = prev.phi.ravel()
    eps2, m, s, pbar = params.epsilon**2, params.mobility, params.sigma, params.phi_bar
    phi, mu = b.copy(), prev.mu.ravel().copy()
    for _ in range(iters):
        d = phi - b
        tilde = phi**3 - phi - (3 * phi**2 - 1) * d / 2 + phi * d**2
        dtilde = 3 * phi**2 - 1 - (6 * phi * d + 3 * phi**2 - 1) / 2 + d**2 + 2 * phi * d
        r_phi = d / dt - m * L @ mu + s * ((phi + b) / 2 - pbar)
        r_mu = mu - tilde + eps2 * L @ ((phi + b) / 2)
        J = np.block([[(1 / dt + s / 2) * eye, -m * L], [-np.diag(dtilde) + eps2 / 2 * L, eye]])
        step = np.linalg.solve(J, -np.concatenate([r_phi, r_mu]))
        phi, mu = phi + step[:n], mu + step[n:]
        if np.linalg.norm(step) < 1e-15:
            break
    return phi.reshape(grid.shape), mu.reshape(grid.shape)


def perturbed(grid, seed=0, amp=0.05, mean=0.3):
    phi = mean + amp * np.random.default_rng(seed).uniform(-1, 1, grid.shape)
    return State(phi, psi_d1(phi))


@pytest.mark.parametrize("preconditioner", ["spectral", "diagonal", "none"])
def test_uniform_state_needs_no_iterations(preconditioner):
    g = GridSpec.square(8)
    s = State(np.full(g.shape, 0.3), np.full(g.shape, psi_d1(0.3)))
    new, stats = solve_step(g, s, s, 1e-3, PhysicalParams(0.1, 0.0, 0.3),
                            SolverSettings(preconditioner=preconditioner))
    assert stats.converged and stats.newton_iters == 0 and stats.linear_iters == 0
    np.testing.assert_array_equal(new.phi, s.phi)


@pytest.mark.parametrize("sigma", [0.0, 500.0])
@pytest.mark.parametrize("preconditioner", ["spectral", "diagonal", "none"])
def test_matches_dense_newton_oracle(sigma, preconditioner):
    g = GridSpec.square(8)
    params = PhysicalParams(0.1, sigma, 0.3)
    prev = perturbed(g)
    dt = 1e-3
    tight = SolverSettings(newton_rtol=1e-12, lin_rtol=1e-12, lin_atol=1e-14, preconditioner=preconditioner)
    new, stats = solve_step(g, prev, prev, dt, params, tight)
    phi_ref, mu_ref = dense_newton(g, prev, dt, params)
    assert np.abs(new.phi - phi_ref).max() <= 1e-8
    assert np.abs(new.mu - mu_ref).max() <= 1e-8
    assert stats.converged and stats.linear_iters >= stats.newton_iters >= 1
    assert new.time == pytest.approx(dt)


def test_default_tolerance_meets_contract():
    g = GridSpec.square(16)
    params = PhysicalParams(0.1, 0.0, 0.3)
    prev = perturbed(g, 1, 0.3)
    new, stats = solve_step(g, prev, prev, 1e-3, params)
    r0 = np.linalg.norm(np.concatenate([x.ravel() for x in residual(g, prev, prev, 1e-3, params)]))
    r1 = np.linalg.norm(np.concatenate([x.ravel() for x in residual(g, new, prev, 1e-3, params)]))
    assert r1 <= max(1e-5 * r0, 1e-12)
    assert stats.final_residual_norm == pytest.approx(r1, rel=1e-8)


def test_newton_cap_zero_raises():
    g = GridSpec.square(8)
    prev = perturbed(g)
    with pytest.raises(NonConvergence) as info:
        solve_step(g, prev, prev, 1e-3, PhysicalParams(0.1, 0.0, 0.3), SolverSettings(max_newton=0))
    assert info.value.stats.newton_iters == 0 and not info.value.stats.converged


def test_linear_stall_raises_with_counted_work():
    g = GridSpec.square(16)
    prev = perturbed(g, 2, 0.3)
    settings = SolverSettings(preconditioner="none", max_lin=3, restart=3)
    with pytest.raises(NonConvergence) as info:
        solve_step(g, prev, prev, 1e-2, PhysicalParams(0.1, 0.0, 0.3), settings)
    assert info.value.stats.linear_iters == 3


def test_tighter_linear_tolerance_changes_little():
    g = GridSpec.square(16)
    params = PhysicalParams(0.1, 0.0, 0.3)
    prev = perturbed(g, 3, 0.2)
    a, _ = solve_step(g, prev, prev, 1e-3, params, SolverSettings(lin_rtol=1e-5))
    b, _ = solve_step(g, prev, prev, 1e-3, params, SolverSettings(lin_rtol=1e-6))
    assert np.abs(a.phi - b.phi).max() <= 1e-4


def test_residual_history_contracts():
    g = GridSpec.square(16)
    prev = perturbed(g, 4, 0.3)
    _, stats = solve_step(g, prev, prev, 2e-3, PhysicalParams(0.1, 0.0, 0.3),
                          SolverSettings(newton_rtol=1e-10))
    hist = stats.residual_history
    assert len(hist) == stats.newton_iters + 1
    assert all(b < a for a, b in zip(hist, hist[1:]))


def test_bad_inputs():
    g = GridSpec.square(8)
    s = perturbed(g)
    with pytest.raises(ValueError):
        solve_step(g, s, s, -1.0, PhysicalParams())
    with pytest.raises(ValueError):
        SolverSettings(preconditioner="ilu")
    with pytest.raises(ValueError):
        SolverSettings(newton_rtol=0)
