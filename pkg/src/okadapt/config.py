"""TOML run configuration.

Sections and keys (everything except ``run.t_end`` has a default)::

    [grid]        nodes, dims, lengths, bc
    [physics]     epsilon, sigma, phi_bar, mobility
    [solver]      newton_rtol, newton_stol, lin_rtol, lin_atol, max_newton,
                  max_lin, restart, preconditioner
    [adaptivity]  controller, rho, kP, kI, kD, kT, fixed_dt, tau_abs, tau_rel,
                  dt_min, dt_max, dt0, growth_cap
    [run]         t_end, seed, amplitude, ic, snapshot_times, steady_state_eps,
                  max_rejects_per_step
"""

from __future__ import annotations

import sys
from dataclasses import replace
from pathlib import Path
from typing import Any

from .adaptivity import ControllerGains, Tolerances, preset
from .driver import FixedStep, InitialCondition, RunConfig
from .grid import GridSpec
from .model import PhysicalParams
from .solver import SolverSettings

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


KEYS = {
    "grid": {"nodes", "dims", "lengths", "bc"},
    "physics": {"epsilon", "sigma", "phi_bar", "mobility"},
    "solver": {"newton_rtol", "newton_stol", "lin_rtol", "lin_atol", "max_newton", "max_lin", "restart",
               "preconditioner"},
    "adaptivity": {"controller", "rho", "kP", "kI", "kD", "kT", "fixed_dt", "tau_abs", "tau_rel", "dt_min",
                   "dt_max", "dt0", "growth_cap"},
    "run": {"t_end", "seed", "amplitude", "ic", "snapshot_times", "steady_state_eps", "max_rejects_per_step"},
}

INT_KEYS = {"max_newton", "max_lin", "restart", "seed", "max_rejects_per_step", "dims"}
STR_KEYS = {"bc", "preconditioner", "controller", "ic"}


def _number(section, key, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{section}.{key}: expected a number, got {value!r}")
    if key in INT_KEYS:
        if int(value) != value:
            raise ConfigError(f"{section}.{key}: expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _check_types(data: dict) -> dict:
    out: dict[str, dict[str, Any]] = {}
    for section, table in data.items():
        if section not in KEYS:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(table, dict):
            raise ConfigError(f"[{section}] must be a table")
        unknown = set(table) - KEYS[section]
        if unknown:
            raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
        clean = {}
        for key, value in table.items():
            if key in STR_KEYS:
                if not isinstance(value, str):
                    raise ConfigError(f"{section}.{key}: expected a string, got {value!r}")
                clean[key] = value
            elif key in ("nodes", "lengths", "snapshot_times"):
                items = value if isinstance(value, list) else [value]
                clean[key] = [_number(section, key, v) for v in items]
            elif key == "growth_cap" and value is False:
                clean[key] = None
            else:
                clean[key] = _number(section, key, value)
        out[section] = clean
    return out


def config_from_dict(data: dict) -> RunConfig:
    """Build and validate a :class:`RunConfig`; errors name the offending key."""
    data = _check_types(data)
    grid_s = data.get("grid", {})
    phys_s = data.get("physics", {})
    solv_s = data.get("solver", {})
    adap_s = data.get("adaptivity", {})
    run_s = data.get("run", {})

    if "t_end" not in run_s:
        raise ConfigError("run.t_end is required")

    dims = grid_s.get("dims", 2)
    nodes = grid_s.get("nodes", [64])
    if len(nodes) == 1:
        nodes = nodes * dims
    lengths = grid_s.get("lengths", [1.0])
    if len(lengths) == 1:
        lengths = lengths * len(nodes)
    if "dims" in grid_s and len(nodes) != dims:
        raise ConfigError(f"grid.nodes has {len(nodes)} entries but grid.dims = {dims}")
    try:
        grid = GridSpec(tuple(nodes), tuple(lengths), grid_s.get("bc", "periodic"))
    except ValueError as exc:
        raise ConfigError(f"[grid] {exc}") from None

    try:
        params = PhysicalParams(**phys_s)
    except ValueError as exc:
        raise ConfigError(f"[physics] {exc}") from None

    try:
        solver = SolverSettings(**solv_s)
    except ValueError as exc:
        raise ConfigError(f"[solver] {exc}") from None

    tol_kw = {k: adap_s[k] for k in ("tau_abs", "tau_rel", "dt_min", "dt_max", "dt0", "growth_cap") if k in adap_s}
    defaults = Tolerances()
    dt_min = tol_kw.get("dt_min", defaults.dt_min)
    dt_max = tol_kw.get("dt_max", defaults.dt_max)
    if dt_min > dt_max:
        raise ConfigError(f"adaptivity.dt_min ({dt_min}) must not exceed adaptivity.dt_max ({dt_max})")
    dt0 = tol_kw.get("dt0", defaults.dt0)
    if not dt_min <= dt0 <= dt_max:
        raise ConfigError(f"adaptivity.dt0 ({dt0}) must lie in [adaptivity.dt_min, adaptivity.dt_max]")
    try:
        tol = Tolerances(**tol_kw)
    except ValueError as exc:
        raise ConfigError(f"[adaptivity] {exc}") from None

    controller = adap_s.get("controller", "pc11").lower()
    try:
        if controller == "fixed":
            if "fixed_dt" not in adap_s:
                raise ConfigError("adaptivity.fixed_dt is required when adaptivity.controller = 'fixed'")
            gains: ControllerGains | FixedStep = FixedStep(adap_s["fixed_dt"])
        else:
            gains = preset(controller, adap_s.get("rho", 0.9))
            overrides = {k: adap_s[k] for k in ("kP", "kI", "kD", "kT") if k in adap_s}
            if overrides:
                gains = replace(gains, name=f"{gains.name}*", **overrides)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"adaptivity.controller: {exc}") from None

    try:
        ic = InitialCondition(
            mean=params.phi_bar,
            amplitude=run_s.get("amplitude", 0.05),
            seed=run_s.get("seed", 0),
            kind=run_s.get("ic", "random"),
        )
        if ic.seed < 0:
            raise ValueError("seed must be non-negative")
        return RunConfig(
            grid=grid,
            params=params,
            t_end=run_s["t_end"],
            ic=ic,
            solver=solver,
            tol=tol,
            gains=gains,
            snapshot_times=tuple(sorted(run_s.get("snapshot_times", []))),
            steady_state_eps=run_s.get("steady_state_eps"),
            max_rejects_per_step=run_s.get("max_rejects_per_step", 20),
        )
    except ValueError as exc:
        raise ConfigError(f"[run] {exc}") from None


def parse_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data)
