import math
from dataclasses import replace

import numpy as np
import pytest

from okadapt.adaptivity import Tolerances, preset
from okadapt.driver import (
    FixedStep,
    InitialCondition,
    RejectStorm,
    RunConfig,
    detect_steady_state,
    make_initial_condition,
    observed_orders,
    run,
)
from okadapt.grid import GridSpec
from okadapt.model import PhysicalParams


def small_config(**kw):
    base = dict(
        grid=GridSpec.square(16),
        params=PhysicalParams(0.1, 0.0, 0.3),
        t_end=0.02,
        ic=InitialCondition(0.3, 0.05, seed=1),
    )
    base.update(kw)
    return RunConfig(**base)


@pytest.mark.parametrize("kind", ["random", "smooth"])
@pytest.mark.parametrize("bc", ["periodic", "no-flux"])
def test_initial_condition_mean_exact(kind, bc):
    g = GridSpec.square(20, bc=bc)
    for seed in range(5):
        phi = make_initial_condition(g, InitialCondition(0.3, 0.05, seed, kind))
        assert abs(g.mean(phi) - 0.3) < 1e-15


def test_initial_condition_amplitude_and_determinism():
    g = GridSpec.square(16)
    a = make_initial_condition(g, InitialCondition(-0.2, 0.05, 7))
    b = make_initial_condition(g, InitialCondition(-0.2, 0.05, 7))
    c = make_initial_condition(g, InitialCondition(-0.2, 0.05, 8))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.abs(a + 0.2).max() <= 0.1
    assert np.all(make_initial_condition(g, InitialCondition(0.4, 0.0, 3)) == 0.4)


def test_initial_condition_validation():
    with pytest.raises(ValueError):
        InitialCondition(amplitude=-1)
    with pytest.raises(ValueError):
        InitialCondition(kind="bumpy")


def test_steady_state_detector():
    f = np.ones((4, 4))
    assert detect_steady_state(f, f, 1e-3, 1e-12)
    assert not detect_steady_state(f, f + 0.1, 0.1, 0.5)
    with pytest.raises(ValueError):
        detect_steady_state(f, f, 0.0, 1.0)


@pytest.mark.parametrize("name", ["i", "pid", "pc11"])
def test_uniform_state_grows_step_to_cap(name):
    cfg = small_config(ic=InitialCondition(0.3, 0.0), gains=preset(name), t_end=0.05)
    rep = run(cfg)
    acc = rep.accepted
    assert rep.rejected_count == 0
    assert all(rec.r <= 1e-10 for rec in acc[1:])
    assert math.isnan(acc[0].r) and rep.forced_steps == [1]
    dts = [rec.dt for rec in acc[:-1]]  # the last step is clipped to t_end
    assert all(b >= a for a, b in zip(dts, dts[1:]))
    assert max(dts) == 5e-3
    assert all(b <= 5 * a * (1 + 1e-12) for a, b in zip(dts, dts[1:]))
    assert rep.final_state.time == pytest.approx(0.05, rel=1e-12)
    np.testing.assert_allclose(rep.final_state.phi, 0.3, atol=1e-12)


def test_first_two_steps_use_initial_size():
    rep = run(small_config(t_end=1e-6))
    acc = rep.accepted
    assert acc[0].dt == 1e-9 and acc[1].dt == 1e-9


def test_run_is_deterministic():
    cfg = small_config()
    a, b = run(cfg), run(cfg)
    key = lambda rep: [tuple(np.nan_to_num(list(vars(r).values()), nan=-1.0)) for r in rep.records]
    assert key(a) == key(b)
    np.testing.assert_array_equal(a.final_state.phi, b.final_state.phi)


def test_accepted_history_is_contiguous():
    cfg = small_config(tol=Tolerances(tau_abs=1e-6, tau_rel=1e-6), t_end=0.01)
    rep = run(cfg)
    assert rep.rejected_count > 0
    t = 0.0
    for rec in rep.accepted:
        assert rec.time == pytest.approx(t + rec.dt, rel=1e-12, abs=1e-18)
        t = rec.time
    for rec in rep.records:
        assert rec.accepted == (rec.r <= 1 or math.isnan(rec.r) or rec.step_index in rep.forced_steps)
    assert rep.accepted_count + rep.rejected_count == len(rep.records)
    assert rep.total_linear == sum(r.linear_iters for r in rep.records)


def test_energy_and_mass():
    rep = run(small_config(t_end=0.05))
    energies = [r.free_energy for r in rep.accepted]
    assert all(b <= a + 1e-6 * max(1, abs(a)) for a, b in zip(energies, energies[1:]))
    assert max(abs(r.mass - 0.3) for r in rep.accepted) <= 1e-4


def test_fixed_step_mode():
    rep = run(small_config(gains=FixedStep(1e-3), t_end=0.01))
    assert rep.accepted_count == 10 and rep.rejected_count == 0
    assert all(math.isnan(r.r) for r in rep.records)
    assert rep.forced_steps == []
    assert rep.final_state.time == pytest.approx(0.01, rel=1e-12)


def test_reject_storm_carries_partial_report():
    cfg = small_config(tol=Tolerances(tau_abs=1e-16, tau_rel=1e-16), max_rejects_per_step=0)
    with pytest.raises(RejectStorm) as info:
        run(cfg)
    rep = info.value.report
    assert rep.status == "aborted"
    assert rep.accepted_count == 1 and rep.rejected_count == 1


def test_force_accept_at_dt_min():
    tol = Tolerances(tau_abs=1e-16, tau_rel=1e-16, dt_min=1e-9, dt0=1e-9)
    rep = run(small_config(tol=tol, t_end=5e-9))
    assert rep.rejected_count == 0
    assert rep.forced_steps == [1, 2, 3, 4, 5]
    assert len(rep.warnings) == 4


def test_snapshots_at_first_step_reaching_time():
    seen = []
    cfg = small_config(snapshot_times=(0.0, 0.005, 0.02))
    rep = run(cfg, on_snapshot=lambda req, t, phi: seen.append((req, t)))
    assert [s[0] for s in seen] == [0.0, 0.005, 0.02]
    times = [r.time for r in rep.accepted]
    for req, t in seen[1:]:
        assert t >= req * (1 - 1e-12)
        assert t == min(x for x in times if x >= req * (1 - 1e-12))


def test_steady_state_stops_early():
    rep = run(small_config(ic=InitialCondition(0.3, 0.0), steady_state_eps=1e-6, t_end=1.0))
    assert rep.status == "steady_state" and rep.accepted_count == 1


def test_observed_orders():
    errs = [(0.1, 1e-2), (0.05, 2.5e-3), (0.025, 6.25e-4)]
    assert observed_orders(errs) == pytest.approx([2.0, 2.0])


def test_run_config_validation():
    with pytest.raises(ValueError):
        small_config(t_end=0.0)
    with pytest.raises(ValueError):
        FixedStep(0.0)
    assert small_config().controller_name == "PC11"
    assert replace(small_config(), gains=FixedStep(1e-3)).controller_name == "fixed"
