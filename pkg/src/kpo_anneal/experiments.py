"""Sweep harness: named scenarios, Cartesian parameter sweeps, CSV/JSON output.

A Scenario bundles a system, a truncation, an integrator configuration, a
classification grid, and a sweep — a list of (parameter path, values) axes
expanded as a Cartesian product. Paths address SystemParams fields with
dotted/indexed syntax ("theta_p", "schedule.t_rd", "drives[0].omega_d");
"[*]" gangs every element of a sequence field to the same value.

Scenario files are flat ``key = value`` text. Every file starts from a named
built-in via ``base = <name>`` and overrides fields from there. Frequencies
are entered in ordinary (non-angular) units and converted to rad/s here, so
keys carry their unit: ``kappa_e_l_mhz``, ``gamma_khz``, ``t_rd_ns``,
``theta_p_pi``, ``p_s_dbm`` (signal power at the input line). Per-mode keys
take an ``_l``/``_r`` infix; without it they apply to every mode.
``sweep.<key> = v1, v2, ...`` declares a sweep axis over the same key space
and replaces the base scenario's sweep. Keys apply in file order, except that
pulse-timing keys take effect together so a shorter schedule can be written
in any order.
"""

from __future__ import annotations

import contextlib
import csv
import dataclasses
import hashlib
import itertools
import json
import math
import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .drives import DriveSettings, ModeParams, PulseSchedule, rabi_from_power
from .evolve import Diagnostics, IntegrationError, IntegratorConfig, integrate
from .fockspace import DensityMatrix, Truncation, fock_state
from .model import (
    IsingCoefficients,
    SpinConfig,
    SystemParams,
    ising_coefficients,
    solution_state,
)
from .readout import OccurrenceProbs, QGrid, occurrence_one, occurrence_two, \
    window_average

__all__ = [
    "ConfigError",
    "Scenario",
    "SweepRow",
    "SweepResult",
    "apply_settings",
    "builtin_scenarios",
    "emit",
    "fast_variant",
    "get_path",
    "load_scenario",
    "resolve_scenario",
    "result_from_json",
    "run_scenario",
    "scenario_from_config",
    "set_path",
]

TWO_PI = 2.0 * math.pi


class ConfigError(ValueError):
    """Malformed scenario configuration: unknown key, bad value, bad path."""


# ---------------------------------------------------------------------------
# parameter paths


def _split_path(path: str):
    segments = []
    for part in path.split("."):
        m = re.fullmatch(r"([A-Za-z_][A-Za-z_0-9]*)(?:\[(\d+|\*)\])?", part)
        if m is None:
            raise ConfigError(f"bad parameter path segment {part!r} in {path!r}")
        segments.append((m.group(1), m.group(2)))
    return segments


def _set_segments(obj, segments, value):
    name, idx = segments[0]
    if not hasattr(obj, name):
        raise ConfigError(f"{type(obj).__name__} has no field {name!r}")
    current = getattr(obj, name)
    if idx is None:
        new = value if len(segments) == 1 else _set_segments(current, segments[1:], value)
        return replace(obj, **{name: new})
    items = list(current)
    indices = range(len(items)) if idx == "*" else (int(idx),)
    for i in indices:
        if not 0 <= i < len(items):
            raise ConfigError(f"index {i} out of range for field {name!r}")
        items[i] = value if len(segments) == 1 else _set_segments(items[i], segments[1:], value)
    return replace(obj, **{name: tuple(items)})


def set_path(params: SystemParams, path: str, value) -> SystemParams:
    """Copy of `params` with the field at the dotted `path` replaced."""
    return _set_segments(params, _split_path(path), value)


def get_path(params, path: str):
    obj = params
    for name, idx in _split_path(path):
        if not hasattr(obj, name):
            raise ConfigError(f"{type(obj).__name__} has no field {name!r}")
        obj = getattr(obj, name)
        if idx is not None:
            i = 0 if idx == "*" else int(idx)
            if not 0 <= i < len(obj):
                raise ConfigError(f"index {idx} out of range for field {name!r}")
            obj = obj[i]
    return obj


def path_label(path: str) -> str:
    """Column name for a sweep path: indices fold into dots, "[*]" drops."""
    return path.replace("[*]", "").replace("[", ".").replace("]", "")


# ---------------------------------------------------------------------------
# scenario


@dataclass
class Scenario:
    """A named system plus sweep axes.

    `truncation`, when given, overrides system.trunc (convenient for --dim
    overrides); `grid` of None is sized at run time from the largest
    semiclassical amplitude across the sweep.
    """

    name: str
    system: SystemParams
    truncation: Truncation | None = None
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    grid: QGrid | None = None
    sweep: tuple = ()
    initial_state: str = "vacuum"
    n_window_samples: int = 9

    def __post_init__(self):
        if self.truncation is None:
            self.truncation = self.system.trunc
        elif self.system.trunc != self.truncation:
            self.system = replace(self.system, trunc=self.truncation)
        axes = []
        for path, values in self.sweep:
            values = tuple(values)
            if not values:
                raise ConfigError(f"sweep axis {path!r} has no values")
            get_path(self.system, path)
            axes.append((path, values))
        self.sweep = tuple(axes)
        if self.n_window_samples < 5:
            raise ConfigError("n_window_samples must be at least 5")
        _initial_density(self.initial_state, self.system.trunc)


def _initial_density(spec: str, trunc: Truncation) -> DensityMatrix:
    """Parse "vacuum", "fock:n[,m]", or a mixture "w*fock:... + w*fock:..."."""
    text = spec.strip()
    if text == "vacuum":
        return DensityMatrix.vacuum(trunc)
    terms = []
    for piece in text.split("+"):
        piece = piece.strip()
        weight, state = 1.0, piece
        if "*" in piece:
            w_text, state = piece.split("*", 1)
            try:
                weight = float(w_text)
            except ValueError:
                raise ConfigError(f"bad mixture weight in {piece!r}") from None
        state = state.strip()
        if not state.startswith("fock:"):
            raise ConfigError(
                f"unknown initial state {piece!r}; use 'vacuum', 'fock:n[,m]',"
                " or a '+'-separated mixture of weighted fock terms"
            )
        try:
            ns = [int(x) for x in state[len("fock:"):].split(",")]
        except ValueError:
            raise ConfigError(f"bad occupation list in {state!r}") from None
        if len(ns) != trunc.n_modes:
            raise ConfigError(
                f"initial state {state!r} lists {len(ns)} occupation numbers "
                f"for {trunc.n_modes} mode(s)"
            )
        try:
            psi = fock_state(trunc.dims[0], ns[0])
            for d, n in zip(trunc.dims[1:], ns[1:]):
                psi = np.kron(psi, fock_state(d, n))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        terms.append((weight, psi))
    total = sum(w for w, _ in terms)
    if abs(total - 1.0) > 1e-6:
        raise ConfigError(f"mixture weights sum to {total}, not 1")
    dim = int(np.prod(trunc.dims))
    mat = np.zeros((dim, dim), dtype=np.complex128)
    for w, psi in terms:
        mat += w * np.outer(psi, psi.conj())
    return DensityMatrix(trunc, mat)


# ---------------------------------------------------------------------------
# execution


@dataclass
class SweepRow:
    index: int
    values: dict
    probs: OccurrenceProbs | None = None
    ising: IsingCoefficients | None = None
    solution: SpinConfig | None = None
    match: bool | None = None
    diagnostics: Diagnostics | None = None
    error: str | None = None


@dataclass
class SweepResult:
    scenario: str
    n_modes: int
    axis_labels: tuple[str, ...]
    rows: list[SweepRow]


def sweep_points(scenario: Scenario):
    """Yield (index, values-by-label, params-or-None, error) in row-major
    order: the last sweep axis varies fastest."""
    axes = scenario.sweep
    labels = [path_label(p) for p, _ in axes]
    for index, combo in enumerate(itertools.product(*(v for _, v in axes))):
        values = dict(zip(labels, combo))
        try:
            params = scenario.system
            for (path, _), value in zip(axes, combo):
                params = set_path(params, path, value)
            yield index, values, params, None
        except (ConfigError, ValueError) as exc:
            yield index, values, None, str(exc)


def _auto_grid(points) -> QGrid:
    alpha = 0.0
    for _, _, params, _ in points:
        if params is None:
            continue
        coeffs = ising_coefficients(params)
        alpha = max(alpha, *(abs(a) for a in coeffs.alphas))
    return QGrid.for_alpha(alpha)


_QUADRANT_SPINS = ((1, 1), (1, -1), (-1, 1), (-1, -1))


def _argmax_spins(probs: OccurrenceProbs) -> tuple[int, ...]:
    k = int(np.argmax(probs.values()))
    if probs.n_modes == 1:
        return ((1,), (-1,))[k]
    return _QUADRANT_SPINS[k]


def _run_point(index, values, params, error, integrator, grid, init_spec,
               n_samples) -> SweepRow:
    if error is not None:
        return SweepRow(index=index, values=values, error=error)
    try:
        rho0 = _initial_density(init_spec, params.trunc)
        w0, w1 = params.schedule.readout_window
        times = np.linspace(w0, w1, n_samples)
        classify = occurrence_one if params.n_modes == 1 else occurrence_two
        traj = integrate(params, times, integrator, rho0=rho0,
                         observable=lambda t, dm: classify(dm, grid))
        probs = window_average(traj, params.schedule, grid)
        coeffs = ising_coefficients(params)
        solution = solution_state(coeffs)
        match = None
        if not solution.degenerate:
            match = _argmax_spins(probs) == tuple(solution.spins)
        return SweepRow(index=index, values=values, probs=probs, ising=coeffs,
                        solution=solution, match=match,
                        diagnostics=traj.diagnostics)
    except (IntegrationError, ValueError) as exc:
        return SweepRow(index=index, values=values, error=str(exc))


def _run_point_star(args):
    return _run_point(*args)


def run_scenario(scenario: Scenario, workers: int | None = None,
                 cache_dir=None) -> SweepResult:
    """Run every sweep point and collect one row per point.

    Deterministic and independent of `workers`: points are computed
    independently and merged by sweep index. Per-point failures land in
    row.error without aborting the sweep. `cache_dir`, when given, memoizes
    whole results keyed on the resolved scenario content (off by default).
    """
    if cache_dir is not None:
        cached = _cache_load(scenario, cache_dir)
        if cached is not None:
            return cached
    points = list(sweep_points(scenario))
    grid = scenario.grid if scenario.grid is not None else _auto_grid(points)
    labels = tuple(path_label(p) for p, _ in scenario.sweep)
    args = [(i, vals, params, err, scenario.integrator, grid,
             scenario.initial_state, scenario.n_window_samples)
            for i, vals, params, err in points]
    if workers is None:
        workers = os.cpu_count() or 1
    rows: list = [None] * len(args)
    if workers > 1 and len(args) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            for row in pool.map(_run_point_star, args):
                rows[row.index] = row
    else:
        for a in args:
            row = _run_point(*a)
            rows[row.index] = row
    result = SweepResult(scenario=scenario.name, n_modes=scenario.system.n_modes,
                         axis_labels=labels, rows=rows)
    if cache_dir is not None:
        _cache_store(scenario, cache_dir, result)
    return result


# ---------------------------------------------------------------------------
# built-in scenarios


_KAPPA_E = (TWO_PI * 0.75e6, TWO_PI * 0.95e6)
_KAPPA_I = (TWO_PI * 0.31e6, TWO_PI * 0.35e6)
_DOMEGA_DI = (TWO_PI * 2.60e12, TWO_PI * 2.65e12)
_PUMPS = (TWO_PI * 148e6, TWO_PI * 169e6)
_OMEGA_R = TWO_PI * 9.88e9
_KERR = -TWO_PI * 12.6e6
_G = TWO_PI * 6.9e6
_DELTA0 = -TWO_PI * 20e6
_GAMMA_ONE = TWO_PI * 6.8e3
_GAMMA_TWO = TWO_PI * 7.7e3


def _device_mode(idx: int, gamma: float) -> ModeParams:
    return ModeParams(omega_r=_OMEGA_R, kerr=_KERR, kappa_e=_KAPPA_E[idx],
                      kappa_i=_KAPPA_I[idx], gamma=gamma,
                      domega_di=_DOMEGA_DI[idx])


def _signal_amp(p_dbm: float, idx: int) -> float:
    return rabi_from_power(p_dbm, _KAPPA_E[idx], _OMEGA_R)


def _one_kpo_system(dim: int, schedule: PulseSchedule) -> SystemParams:
    return SystemParams(
        trunc=Truncation((dim,)),
        modes=(_device_mode(0, _GAMMA_ONE),),
        drives=(DriveSettings(p=_PUMPS[0], omega_d=_signal_amp(-105.0, 0),
                              theta_s=1.5 * math.pi),),
        schedule=schedule,
        delta0=_DELTA0,
        chirped=True,
    )


def _two_kpo_system(dims, schedule, omega_d=(0.0, 0.0),
                    theta_s=(0.0, 0.0)) -> SystemParams:
    return SystemParams(
        trunc=Truncation(dims),
        modes=(_device_mode(0, _GAMMA_TWO), _device_mode(1, _GAMMA_TWO)),
        drives=(DriveSettings(p=_PUMPS[0], omega_d=omega_d[0], theta_s=theta_s[0]),
                DriveSettings(p=_PUMPS[1], omega_d=omega_d[1], theta_s=theta_s[1])),
        schedule=schedule,
        g=_G,
        theta_p=0.0,
        delta0=_DELTA0,
        chirped=True,
    )


def builtin_scenarios() -> dict:
    """The shipped scenario presets, keyed by name.

    lock-1kpo    one mode locked by a weak resonant drive; sweeps the signal
                 power (as the drive amplitude it produces at the input line).
    corr-2kpo    two coupled modes, no locking drives; sweeps the pump phase
                 difference over a full turn.
    anneal-2kpo  two modes with opposed locking phases; sweeps both drive
                 amplitudes over a small grid around the solution boundary.
    slope-sweep  lock-1kpo conditions over the two drive-ramp exponents.
    delay-sweep  corr-2kpo conditions on a long plateau; sweeps the readout
                 delay.
    """
    lock_sched = PulseSchedule(t_s=100e-9, t_sp=100e-9, t_pp=800e-9,
                               t_r=400e-9, t_rd=300e-9, n_pump=5.0, n_signal=1.0)
    corr_sched = PulseSchedule(t_s=400e-9, t_sp=0.0, t_pp=600e-9,
                               t_r=400e-9, t_rd=100e-9, n_pump=2.5, n_signal=1.0)
    anneal_sched = PulseSchedule(t_s=400e-9, t_sp=100e-9, t_pp=1100e-9,
                                 t_r=400e-9, t_rd=600e-9, n_pump=2.5, n_signal=1.0)
    delay_sched = PulseSchedule(t_s=400e-9, t_sp=0.0, t_pp=2500e-9,
                                t_r=400e-9, t_rd=100e-9, n_pump=2.5, n_signal=1.0)

    powers_dbm = (-120.0, -117.0, -114.0, -111.0, -108.0, -105.0)
    lock = Scenario(
        name="lock-1kpo",
        system=_one_kpo_system(30, lock_sched),
        sweep=(("drives[0].omega_d",
                tuple(_signal_amp(p, 0) for p in powers_dbm)),),
    )
    corr = Scenario(
        name="corr-2kpo",
        system=_two_kpo_system((30, 30), corr_sched),
        sweep=(("theta_p", tuple(np.linspace(0.0, TWO_PI, 9))),),
    )
    boundary_amps = tuple(TWO_PI * m * 1e6 for m in (14.0, 18.0, 22.0))
    anneal = Scenario(
        name="anneal-2kpo",
        system=_two_kpo_system((30, 30), anneal_sched,
                               omega_d=(boundary_amps[1], boundary_amps[1]),
                               theta_s=(1.5 * math.pi, 0.5 * math.pi)),
        sweep=(("drives[0].omega_d", boundary_amps),
               ("drives[1].omega_d", boundary_amps)),
    )
    slope = Scenario(
        name="slope-sweep",
        system=_one_kpo_system(30, lock_sched),
        sweep=(("schedule.n_pump", (1.0, 2.0, 3.0, 5.0)),
               ("schedule.n_signal", (1.0, 2.0, 4.0))),
    )
    delay = Scenario(
        name="delay-sweep",
        system=_two_kpo_system((30, 30), delay_sched),
        sweep=(("schedule.t_rd", tuple(np.linspace(0.1e-6, 2.0e-6, 9))),),
    )
    return {s.name: s for s in (lock, corr, anneal, slope, delay)}


def fast_variant(scenario: Scenario) -> Scenario:
    """Desk-scale variant: 14 levels per mode, pumps rescaled so the
    oscillation amplitude is about 2.

    One-photon amplitudes (including swept values) shrink by the amplitude
    ratio so the field-versus-coupling balance keeps its shape; readout
    boundaries move with the amplitudes, so crossovers survive rescaled.
    """
    system = scenario.system
    full = ising_coefficients(system).alphas
    n = system.n_modes
    ratios = []
    for j in range(n):
        system = set_path(system, f"drives[{j}].p", 4.0 * abs(system.modes[j].kerr))
        r = 2.0 / full[j] if full[j] > 0 else 1.0
        ratios.append(r)
        system = set_path(system, f"drives[{j}].omega_d",
                          system.drives[j].omega_d * r)
    gmean = math.prod(ratios) ** (1.0 / len(ratios))
    sweep = []
    for path, values in scenario.sweep:
        if path.endswith(".omega_d"):
            head_idx = _split_path(path)[0][1]
            r = gmean if head_idx in (None, "*") else ratios[int(head_idx)]
            values = tuple(v * r for v in values)
        sweep.append((path, values))
    return Scenario(name=scenario.name + "-fast", system=system,
                    truncation=Truncation((14,) * n),
                    integrator=scenario.integrator, grid=None,
                    sweep=tuple(sweep), initial_state=scenario.initial_state,
                    n_window_samples=scenario.n_window_samples)


# ---------------------------------------------------------------------------
# flat key = value configuration

_SCALARS = {
    "t_s_ns": ("schedule.t_s", 1e-9),
    "t_sp_ns": ("schedule.t_sp", 1e-9),
    "t_pp_ns": ("schedule.t_pp", 1e-9),
    "t_r_ns": ("schedule.t_r", 1e-9),
    "t_rd_ns": ("schedule.t_rd", 1e-9),
    "n_pump": ("schedule.n_pump", 1.0),
    "n_signal": ("schedule.n_signal", 1.0),
    "omega_r_ghz": ("modes[{j}].omega_r", TWO_PI * 1e9),
    "kerr_mhz": ("modes[{j}].kerr", TWO_PI * 1e6),
    "kappa_e_mhz": ("modes[{j}].kappa_e", TWO_PI * 1e6),
    "kappa_i_mhz": ("modes[{j}].kappa_i", TWO_PI * 1e6),
    "gamma_khz": ("modes[{j}].gamma", TWO_PI * 1e3),
    "p_mhz": ("drives[{j}].p", TWO_PI * 1e6),
    "omega_d_mhz": ("drives[{j}].omega_d", TWO_PI * 1e6),
    "theta_s_pi": ("drives[{j}].theta_s", math.pi),
    "g_mhz": ("g", TWO_PI * 1e6),
    "theta_p_pi": ("theta_p", math.pi),
    "delta0_mhz": ("delta0", TWO_PI * 1e6),
}

_KEYMAP: dict = {}
for _key, (_path, _scale) in _SCALARS.items():
    if "{j}" in _path:
        _KEYMAP[_key] = (_path.replace("{j}", "*"), _scale)
        _stem, _unit = _key.rsplit("_", 1)
        for _suffix, _j in (("l", 0), ("r", 1)):
            _KEYMAP[f"{_stem}_{_suffix}_{_unit}"] = (_path.replace("{j}", str(_j)), _scale)
    else:
        _KEYMAP[_key] = (_path, _scale)
del _key, _path, _scale

_SIGNAL_POWER_KEYS = {"p_s_dbm": "*", "p_s_l_dbm": 0, "p_s_r_dbm": 1}


def _parse_float(key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from None


def _parse_bool(key: str, raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {raw!r}")


def _signal_paths_values(system: SystemParams, which, dbm_values):
    """Resolve signal-power values (dBm) into per-drive amplitude paths."""
    if which == "*":
        if system.n_modes > 1:
            raise ConfigError(
                "p_s_dbm is ambiguous with two modes (external couplings "
                "differ); use p_s_l_dbm / p_s_r_dbm"
            )
        which = 0
    mode = system.modes[which]
    values = tuple(rabi_from_power(v, mode.kappa_e, mode.omega_r)
                   for v in dbm_values)
    return f"drives[{which}].omega_d", values


def apply_settings(scenario: Scenario, pairs) -> Scenario:
    """Apply ordered (key, raw-string) settings on top of a scenario.

    The first sweep.* key clears the inherited sweep; later ones append axes
    in order.
    """
    name = scenario.name
    system = scenario.system
    truncation = scenario.truncation
    integrator = scenario.integrator
    grid = scenario.grid
    sweep = list(scenario.sweep)
    initial_state = scenario.initial_state
    sweep_replaced = False
    grid_extent = grid_points = None
    # schedule fields are collected and applied in one shot so that, e.g.,
    # shrinking every time at once never trips validation halfway through
    schedule_updates: dict = {}

    for key, raw in pairs:
        try:
            if key == "base":
                raise ConfigError("base may only appear in a scenario file, once")
            elif key == "name":
                name = raw
            elif key == "dim_per_mode":
                dim = int(_parse_float(key, raw))
                if dim < 2:
                    raise ConfigError(f"{key}: need at least 2 levels")
                truncation = Truncation((dim,) * system.n_modes)
            elif key == "backend":
                integrator = replace(integrator, backend=raw)
            elif key == "dt_ns":
                integrator = replace(integrator, dt=_parse_float(key, raw) * 1e-9)
            elif key == "initial_state":
                initial_state = raw
            elif key == "chirped":
                system = set_path(system, "chirped", _parse_bool(key, raw))
            elif key == "grid_extent":
                grid_extent = _parse_float(key, raw)
            elif key == "grid_points":
                grid_points = int(_parse_float(key, raw))
            elif key in _SIGNAL_POWER_KEYS:
                path, values = _signal_paths_values(
                    system, _SIGNAL_POWER_KEYS[key], (_parse_float(key, raw),))
                system = set_path(system, path, values[0])
            elif key in _KEYMAP:
                path, scale = _KEYMAP[key]
                value = _parse_float(key, raw) * scale
                if path.startswith("schedule."):
                    schedule_updates[path.split(".", 1)[1]] = value
                else:
                    system = set_path(system, path, value)
            elif key.startswith("sweep."):
                target = key[len("sweep."):]
                raw_values = [v.strip() for v in raw.split(",") if v.strip()]
                if not raw_values:
                    raise ConfigError(f"{key}: empty value list")
                floats = tuple(_parse_float(key, v) for v in raw_values)
                if target in _SIGNAL_POWER_KEYS:
                    path, values = _signal_paths_values(
                        system, _SIGNAL_POWER_KEYS[target], floats)
                elif target in _KEYMAP:
                    path, scale = _KEYMAP[target]
                    values = tuple(v * scale for v in floats)
                else:
                    raise ConfigError(f"unknown sweep key {target!r}")
                if not sweep_replaced:
                    sweep = []
                    sweep_replaced = True
                sweep.append((path, values))
            else:
                raise ConfigError(f"unknown configuration key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{key}: {exc}") from exc

    if (grid_extent is None) != (grid_points is None):
        raise ConfigError("grid_extent and grid_points must be given together")
    if grid_extent is not None:
        grid = QGrid(extent=grid_extent, points_per_axis=grid_points)
    if schedule_updates:
        try:
            system = replace(system, schedule=replace(system.schedule,
                                                      **schedule_updates))
        except ValueError as exc:
            raise ConfigError(f"schedule: {exc}") from exc
    try:
        return Scenario(name=name, system=system, truncation=truncation,
                        integrator=integrator, grid=grid, sweep=tuple(sweep),
                        initial_state=initial_state,
                        n_window_samples=scenario.n_window_samples)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def _parse_pairs(text: str):
    pairs = []
    seen = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key, raw = key.strip(), raw.strip()
        if not key or not raw:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        pairs.append((key, raw))
    return pairs


def scenario_from_config(text: str, fallback_name: str | None = None) -> Scenario:
    """Build a scenario from flat key = value text (requires a `base` key)."""
    pairs = _parse_pairs(text)
    base_name = None
    name = fallback_name
    rest = []
    for key, raw in pairs:
        if key == "base":
            base_name = raw
        elif key == "name":
            name = raw
        else:
            rest.append((key, raw))
    builtins = builtin_scenarios()
    if base_name is None:
        raise ConfigError(
            f"scenario files must start from a built-in: base = one of "
            f"{', '.join(sorted(builtins))}"
        )
    if base_name not in builtins:
        raise ConfigError(
            f"unknown base scenario {base_name!r}; available: "
            f"{', '.join(sorted(builtins))}"
        )
    scenario = builtins[base_name]
    scenario = apply_settings(scenario, rest)
    scenario.name = name or f"{base_name}-custom"
    return scenario


def load_scenario(path) -> Scenario:
    return scenario_from_config(Path(path).read_text(),
                                fallback_name=Path(path).stem)


def resolve_scenario(name_or_path: str) -> Scenario:
    builtins = builtin_scenarios()
    if name_or_path in builtins:
        return builtins[name_or_path]
    if os.path.exists(name_or_path):
        return load_scenario(name_or_path)
    raise ConfigError(
        f"{name_or_path!r} is neither a built-in scenario "
        f"({', '.join(sorted(builtins))}) nor a file"
    )


# ---------------------------------------------------------------------------
# emission

_DIAG_FIELDS = ("steps", "dt", "backend", "trace_drift", "trace_step_max",
                "hermiticity_max", "min_eigenvalue")


def _probs_dict(p: OccurrenceProbs | None):
    if p is None:
        return None
    return {"n_modes": p.n_modes, **p.as_dict()}


def _probs_from(d):
    if d is None:
        return None
    d = dict(d)
    n = d.pop("n_modes")
    d.pop("same_phase", None)
    return OccurrenceProbs(n_modes=n, **d)


def _ising_dict(c: IsingCoefficients | None):
    if c is None:
        return None
    return {"j_lr": c.j_lr, "h": list(c.h), "alphas": list(c.alphas)}


def _solution_dict(s: SpinConfig | None):
    if s is None:
        return None
    return {"spins": list(s.spins), "degenerate": s.degenerate}


def _diag_dict(d: Diagnostics | None):
    # wall_time is intentionally left out: emitted artifacts must be
    # byte-stable across runs
    if d is None:
        return None
    return {k: getattr(d, k) for k in _DIAG_FIELDS}


def _row_dict(row: SweepRow) -> dict:
    return {
        "index": row.index,
        "values": row.values,
        "probs": _probs_dict(row.probs),
        "ising": _ising_dict(row.ising),
        "solution": _solution_dict(row.solution),
        "match": row.match,
        "diagnostics": _diag_dict(row.diagnostics),
        "error": row.error,
    }


def _json_payload(result: SweepResult) -> dict:
    return {
        "schema": 1,
        "scenario": result.scenario,
        "n_modes": result.n_modes,
        "axis_labels": list(result.axis_labels),
        "rows": [_row_dict(r) for r in result.rows],
    }


def result_from_json(obj) -> SweepResult:
    if obj.get("schema") != 1:
        raise ConfigError(f"unsupported result schema {obj.get('schema')!r}")
    rows = []
    for r in obj["rows"]:
        ising = r["ising"]
        solution = r["solution"]
        diag = r["diagnostics"]
        rows.append(SweepRow(
            index=r["index"],
            values=r["values"],
            probs=_probs_from(r["probs"]),
            ising=None if ising is None else IsingCoefficients(
                j_lr=ising["j_lr"], h=tuple(ising["h"]),
                alphas=tuple(ising["alphas"])),
            solution=None if solution is None else SpinConfig(
                spins=tuple(solution["spins"]),
                degenerate=solution["degenerate"]),
            match=r["match"],
            diagnostics=None if diag is None else Diagnostics(**diag),
            error=r["error"],
        ))
    return SweepResult(scenario=obj["scenario"], n_modes=obj["n_modes"],
                       axis_labels=tuple(obj["axis_labels"]), rows=rows)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".9g")
    return str(v)


def csv_columns(result: SweepResult) -> list:
    cols = list(result.axis_labels)
    if result.n_modes == 1:
        cols += ["xi_plus", "xi_minus", "ising.h0", "ising.alpha0"]
    else:
        cols += ["p_pp", "p_pm", "p_mp", "p_mm", "same_phase",
                 "ising.j_lr", "ising.h0", "ising.h1",
                 "ising.alpha0", "ising.alpha1"]
    cols += ["solution", "solution.degenerate", "match", "diag.steps",
             "diag.dt", "diag.trace_drift", "diag.trace_step_max",
             "diag.hermiticity_max", "error"]
    return cols


def _csv_row(result: SweepResult, row: SweepRow) -> list:
    cells = [_fmt(row.values.get(label)) for label in result.axis_labels]
    p = row.probs
    if result.n_modes == 1:
        cells += [_fmt(p.xi_plus if p else None), _fmt(p.xi_minus if p else None)]
    else:
        for name in ("p_pp", "p_pm", "p_mp", "p_mm", "same_phase"):
            cells.append(_fmt(getattr(p, name) if p else None))
    c = row.ising
    if result.n_modes == 2:
        cells.append(_fmt(c.j_lr if c else None))
    for j in range(result.n_modes):
        cells.append(_fmt(c.h[j] if c else None))
    for j in range(result.n_modes):
        cells.append(_fmt(c.alphas[j] if c else None))
    s = row.solution
    cells.append("" if s is None else "".join("+" if x > 0 else "-" for x in s.spins))
    cells.append(_fmt(s.degenerate if s else None))
    cells.append(_fmt(row.match))
    d = row.diagnostics
    for name in ("steps", "dt", "trace_drift", "trace_step_max", "hermiticity_max"):
        cells.append(_fmt(getattr(d, name) if d else None))
    cells.append(row.error or "")
    return cells


@contextlib.contextmanager
def _dest_stream(destination, newline=None):
    if hasattr(destination, "write"):
        yield destination
    else:
        with open(destination, "w", newline=newline) as f:
            yield f


def emit(result: SweepResult, format: str, destination) -> None:
    """Write a sweep result as CSV (9 significant digits, RFC-4180 quoting)
    or schema-versioned JSON. `destination` is a path or writable stream."""
    if format == "csv":
        with _dest_stream(destination, newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(csv_columns(result))
            for row in result.rows:
                writer.writerow(_csv_row(result, row))
    elif format == "json":
        with _dest_stream(destination) as f:
            json.dump(_json_payload(result), f, indent=2)
            f.write("\n")
    else:
        raise ConfigError(f"unknown output format {format!r}; use csv or json")


# ---------------------------------------------------------------------------
# result cache (opt-in)

_CACHE_SCHEMA = 1


def _fingerprint(s: Scenario) -> str:
    blob = json.dumps({
        "cache_schema": _CACHE_SCHEMA,
        "system": dataclasses.asdict(s.system),
        "dims": list(s.truncation.dims),
        "integrator": dataclasses.asdict(s.integrator),
        "grid": None if s.grid is None else [s.grid.extent, s.grid.points_per_axis],
        "sweep": [[p, list(v)] for p, v in s.sweep],
        "initial_state": s.initial_state,
        "samples": s.n_window_samples,
    }, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:24]


def _cache_load(s: Scenario, cache_dir) -> SweepResult | None:
    path = Path(cache_dir) / f"{_fingerprint(s)}.json"
    if not path.exists():
        return None
    with open(path) as f:
        return result_from_json(json.load(f))


def _cache_store(s: Scenario, cache_dir, result: SweepResult) -> None:
    directory = Path(cache_dir)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / f"{_fingerprint(s)}.json", "w") as f:
        json.dump(_json_payload(result), f, indent=2)
