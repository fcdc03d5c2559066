"""Controller comparison: accepted/rejected steps, iteration averages and relative CPU effort."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

from .adaptivity import preset
from .driver import RunAborted, RunConfig, run

logger = logging.getLogger(__name__)


@dataclass
class BenchRow:
    case: str
    controller: str
    accepted: int
    rejected: int
    avg_newton: float
    avg_linear: float
    total_linear: int
    relative_effort: float = math.nan
    status: str = "completed"
    wall_time: float = 0.0


def _bench_one(case: str, cfg: RunConfig) -> BenchRow:
    try:
        report = run(cfg)
        status = report.status
    except RunAborted as exc:
        logger.warning("%s / %s aborted: %s", case, cfg.controller_name, exc)
        report = exc.report
        status = f"failed: {exc}"
    return BenchRow(
        case,
        cfg.controller_name,
        report.accepted_count,
        report.rejected_count,
        report.avg_newton,
        report.avg_linear,
        report.total_linear,
        status=status,
        wall_time=report.wall_time,
    )


def normalize_effort(rows: Sequence[BenchRow]) -> None:
    """Relative effort within each case; the costliest successful run gets exactly 1."""
    for case in {row.case for row in rows}:
        ok = [r for r in rows if r.case == case and not r.status.startswith("failed")]
        worst = max((r.total_linear for r in ok), default=0)
        for r in ok:
            r.relative_effort = r.total_linear / worst if worst else 1.0


def bench(
    configs: Sequence[tuple[str, RunConfig]] | Sequence[RunConfig],
    controllers: Sequence[str] = ("i", "pid", "pc11"),
    jobs: int = 1,
) -> list[BenchRow]:
    """Run every (config, controller) pair.  A failing run becomes a ``failed`` row."""
    if not configs or not controllers:
        raise ValueError("bench needs at least one config and one controller")
    labelled = [c if isinstance(c, tuple) else (f"case{i}", c) for i, c in enumerate(configs)]
    tasks = []
    for case, cfg in labelled:
        rho = getattr(cfg.gains, "rho", 0.9)
        for name in controllers:
            tasks.append((case, replace(cfg, gains=preset(name, rho))))
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            rows = list(pool.map(_bench_one, *zip(*tasks)))
    else:
        rows = [_bench_one(case, cfg) for case, cfg in tasks]
    normalize_effort(rows)
    return rows


def format_table(rows: Sequence[BenchRow]) -> str:
    head = f"{'case':<12}{'controller':<11}{'accepted':>9}{'rejected':>9}{'avg NL':>9}{'avg lin':>10}{'rel. CPU':>10}"
    lines = [head, "-" * len(head)]
    for r in rows:
        effort = f"{r.relative_effort:.2f}" if math.isfinite(r.relative_effort) else "failed"
        lines.append(
            f"{r.case:<12}{r.controller:<11}{r.accepted:>9d}{r.rejected:>9d}"
            f"{r.avg_newton:>9.4f}{r.avg_linear:>10.4f}{effort:>10}"
        )
    return "\n".join(lines)
