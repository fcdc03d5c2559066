from dataclasses import replace

import pytest

from okadapt.adaptivity import Tolerances
from okadapt.bench import BenchRow, bench, format_table, normalize_effort
from okadapt.driver import InitialCondition, RunConfig
from okadapt.grid import GridSpec
from okadapt.model import PhysicalParams


@pytest.fixture(scope="module")
def cfg():
    return RunConfig(GridSpec.square(16), PhysicalParams(0.1, 500.0, 0.3), 0.01, InitialCondition(0.3, 0.05, 1))


def test_single_controller_is_unit_effort(cfg):
    (row,) = bench([("c", cfg)], ["pid"])
    assert row.relative_effort == 1.0 and row.controller == "PID"


def test_three_controllers_one_unit_row(cfg):
    rows = bench([("case1", cfg)], ["i", "pid", "pc11"])
    assert [r.controller for r in rows] == ["I", "PID", "PC11"]
    efforts = [r.relative_effort for r in rows]
    assert sum(e == 1.0 for e in efforts) == 1
    assert all(0 < e <= 1 for e in efforts)
    table = format_table(rows)
    assert len(table.splitlines()) == 5


def test_parallel_matches_serial(cfg):
    serial = bench([cfg], ["i", "pc11"])
    parallel = bench([cfg], ["i", "pc11"], jobs=2)
    strip = lambda rows: [replace(r, wall_time=0.0) for r in rows]
    assert strip(serial) == strip(parallel)


def test_failed_run_is_a_row(cfg):
    storm = replace(cfg, tol=Tolerances(tau_abs=1e-16, tau_rel=1e-16), max_rejects_per_step=0)
    rows = bench([("ok", cfg), ("storm", storm)], ["i"])
    assert rows[0].relative_effort == 1.0
    assert rows[1].status.startswith("failed")
    assert "failed" in format_table(rows).splitlines()[-1]


def test_normalization_per_case():
    rows = [BenchRow("a", "I", 1, 0, 1, 1, 10), BenchRow("a", "PID", 1, 0, 1, 1, 40),
            BenchRow("b", "I", 1, 0, 1, 1, 5)]
    normalize_effort(rows)
    assert [r.relative_effort for r in rows] == [0.25, 1.0, 1.0]


def test_bench_requires_inputs(cfg):
    with pytest.raises(ValueError):
        bench([], ["i"])
    with pytest.raises(ValueError):
        bench([cfg], [])
