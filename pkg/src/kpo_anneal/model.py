"""System Hamiltonians, dissipation channels, and the Ising encoding.

Rotating frame at half the pump frequency. With the frame angle chosen as the
integral of omega_p(t)/2, a frequency chirp enters exactly as the
time-dependent detuning on the number operator; pump and signal terms stay
resonant. The pump phase difference theta_p sits on mode R's two-photon term
(mode L's carries phase 0) and the coupling term is phase-free, so the state
is 2pi-periodic in theta_p as measured on fixed quadrature axes: mode L's
oscillation states sit on the real axis and mode R's at angle theta_p / 2.
Rotating mode R's frame by theta_p / 2 instead moves the phase onto the
coupling term, exp(-i theta_p / 2); the Ising coefficients below are frame
independent.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .drives import DriveSettings, ModeParams, PulseSchedule, coherent_amplitude, detuning_at
from .fockspace import ComplexOperator, Truncation, annihilation, number_op

__all__ = [
    "SystemParams",
    "IsingCoefficients",
    "SpinConfig",
    "hamiltonian_one",
    "hamiltonian_two",
    "collapse_ops",
    "ising_coefficients",
    "ising_energy",
    "solution_state",
    "eigenenergy_oscillation",
]

DEGENERACY_RTOL = 1e-9


@dataclass(frozen=True)
class SystemParams:
    """Everything needed to simulate one or two driven KPOs."""

    trunc: Truncation
    modes: tuple[ModeParams, ...]
    drives: tuple[DriveSettings, ...]
    schedule: PulseSchedule
    g: float = 0.0  # linear coupling, rad/s (two-mode only)
    theta_p: float = 0.0  # pump phase difference, rad
    delta0: float = 0.0  # initial (chirped) or constant (unchirped) detuning, rad/s
    chirped: bool = True

    def __post_init__(self):
        n = self.trunc.n_modes
        if len(self.modes) != n or len(self.drives) != n:
            raise ValueError("modes/drives length must match truncation mode count")
        if n == 1 and self.g != 0.0:
            raise ValueError("coupling g requires two modes")

    @property
    def n_modes(self) -> int:
        return self.trunc.n_modes

    def detuning(self, t):
        return detuning_at(t, self.delta0, self.schedule.t_s, self.chirped)

    def plateau_detuning(self) -> float:
        return 0.0 if self.chirped else self.delta0

    def kappa_star_i(self, mode: int) -> float:
        m = self.modes[mode]
        return m.kappa_i - 2.0 * m.gamma

    def kappa_star_a(self, mode: int) -> float:
        return self.modes[mode].kappa_e + self.kappa_star_i(mode)

    def satisfies_adiabatic_initial_condition(self) -> bool:
        """Vacuum starts as the highest-energy state: Delta_0 < -g (< 0)."""
        return self.delta0 < -abs(self.g)


def _h_single(dim: int, kerr: float, delta: float, p_t: float, omega_t: float,
              theta_s: float, pump_phase: float = 0.0) -> np.ndarray:
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=np.float64)), 1).astype(np.complex128)
    ad = a.conj().T
    n = np.diag(np.arange(dim, dtype=np.float64)).astype(np.complex128)
    ph = np.exp(1j * pump_phase)
    h = (0.5 * kerr * (ad @ ad @ a @ a) + delta * n
         + 0.5 * p_t * (ph * (ad @ ad) + np.conj(ph) * (a @ a)))
    if omega_t != 0.0:
        h = h + 1j * omega_t * (np.exp(1j * theta_s) * ad - np.exp(-1j * theta_s) * a)
    return h


def hamiltonian_one(params: SystemParams, t: float, mode: int = 0) -> ComplexOperator:
    """Single-KPO Hamiltonian at time t (drive envelopes applied), over hbar."""
    sched = params.schedule
    m = params.modes[mode]
    drv = params.drives[mode]
    h = _h_single(
        params.trunc.dims[mode],
        m.kerr,
        params.detuning(t),
        drv.p * sched.pump_envelope(t),
        drv.omega_d * sched.signal_envelope(t),
        drv.theta_s,
        params.theta_p if mode == 1 else 0.0,
    )
    if params.n_modes == 1:
        return ComplexOperator(params.trunc, h)
    # embedded single-mode piece of a two-mode system
    eye = [np.eye(d, dtype=np.complex128) for d in params.trunc.dims]
    full = np.kron(h, eye[1]) if mode == 0 else np.kron(eye[0], h)
    return ComplexOperator(params.trunc, full)


def hamiltonian_two(params: SystemParams, t: float) -> ComplexOperator:
    """Two-KPO Hamiltonian: both single-mode parts (mode R's pump carrying
    exp(i theta_p)) plus the beam-splitter coupling g(aL^dag aR + h.c.)."""
    if params.n_modes != 2:
        raise ValueError("hamiltonian_two requires a two-mode truncation")
    hl = hamiltonian_one(params, t, mode=0).matrix
    hr = hamiltonian_one(params, t, mode=1).matrix
    al = annihilation(params.trunc, 0).matrix
    ar = annihilation(params.trunc, 1).matrix
    coupling = params.g * (al.conj().T @ ar)
    coupling = coupling + coupling.conj().T
    return ComplexOperator(params.trunc, hl + hr + coupling)


def hamiltonian(params: SystemParams, t: float) -> ComplexOperator:
    return hamiltonian_one(params, t) if params.n_modes == 1 else hamiltonian_two(params, t)


def collapse_ops(params: SystemParams) -> list[tuple[ComplexOperator, float]]:
    """(operator, rate) pairs for D[O] rho = 2 O rho O^dag - O^dag O rho - rho O^dag O.

    Per mode: single-photon loss (a_j, kappa*_a/2) and pure dephasing
    (a_j^dag a_j, gamma_j), with kappa*_a = kappa_e + kappa_i - 2 gamma.
    """
    out = []
    for j in range(params.n_modes):
        ksi = params.kappa_star_i(j)
        if ksi < 0:
            raise ValueError(
                f"mode {j}: corrected internal loss kappa*_i = kappa_i - 2 gamma "
                f"= {ksi:.3e} rad/s is negative; gamma too large"
            )
        out.append((annihilation(params.trunc, j), 0.5 * params.kappa_star_a(j)))
        gamma = params.modes[j].gamma
        if gamma > 0:
            out.append((number_op(params.trunc, j), gamma))
    return out


@dataclass(frozen=True)
class IsingCoefficients:
    """Effective Ising problem: E = -j_lr sL sR + sum_j h[j] s_j."""

    j_lr: float
    h: tuple[float, ...]
    alphas: tuple[float, ...] = field(default=())


@dataclass(frozen=True)
class SpinConfig:
    spins: tuple[int, ...]
    degenerate: bool = False

    def __post_init__(self):
        if any(s not in (-1, 1) for s in self.spins):
            raise ValueError("spins must be +1 or -1")


def ising_coefficients(params: SystemParams) -> IsingCoefficients:
    """Coefficients at the drive plateau.

    alpha_j = sqrt((p_j + Delta)/|K_j|), J_LR = 2 cos(theta_p/2) alpha_L alpha_R g,
    h_j = 2 sin(theta_sj) alpha_j Omega_dj. Spin s_j = +1 means mode j
    oscillates in the lobe at its own pump-locked angle (theta_p/2 for mode
    R), so J_LR is frame independent; the fixed-axis readout sees s_R
    flipped once that lobe crosses the imaginary axis (|theta_p| > pi).
    """
    delta = params.plateau_detuning()
    alphas = tuple(
        coherent_amplitude(params.drives[j].p, delta, params.modes[j].kerr)
        for j in range(params.n_modes)
    )
    h = tuple(
        2.0 * math.sin(params.drives[j].theta_s) * alphas[j] * params.drives[j].omega_d
        for j in range(params.n_modes)
    )
    if params.n_modes == 2:
        j_lr = 2.0 * math.cos(0.5 * params.theta_p) * alphas[0] * alphas[1] * params.g
    else:
        j_lr = 0.0
    return IsingCoefficients(j_lr=j_lr, h=h, alphas=alphas)


def ising_energy(coeffs: IsingCoefficients, spins) -> float:
    spins = tuple(spins)
    if len(spins) != len(coeffs.h):
        raise ValueError("spin count does not match coefficient count")
    e = sum(hj * sj for hj, sj in zip(coeffs.h, spins))
    if len(spins) == 2:
        e -= coeffs.j_lr * spins[0] * spins[1]
    return float(e)


def solution_state(coeffs: IsingCoefficients) -> SpinConfig:
    """Spin configuration minimizing the Ising energy; near-ties are flagged."""
    configs = list(itertools.product((1, -1), repeat=len(coeffs.h)))
    energies = [ising_energy(coeffs, c) for c in configs]
    order = np.argsort(energies)
    best = configs[order[0]]
    scale = max(1.0, abs(coeffs.j_lr), *(abs(hj) for hj in coeffs.h)) if coeffs.h else 1.0
    degenerate = len(configs) > 1 and (
        energies[order[1]] - energies[order[0]] <= DEGENERACY_RTOL * scale
    )
    return SpinConfig(spins=best, degenerate=degenerate)


def eigenenergy_oscillation(params: SystemParams, spins) -> float:
    """Mean-field eigenenergy of the oscillation state |sL aL>|sR aR> (over hbar).

    E(s) = sum_j [K_j/2 a_j^4 + Delta a_j^2 + p_j a_j^2] - E_Ising(s); the
    solution state of the Ising problem is the highest-energy oscillation
    state (negative Kerr).
    """
    coeffs = ising_coefficients(params)
    delta = params.plateau_detuning()
    e = 0.0
    for j in range(params.n_modes):
        aj2 = coeffs.alphas[j] ** 2
        e += 0.5 * params.modes[j].kerr * aj2 ** 2 + delta * aj2 + params.drives[j].p * aj2
    return float(e - ising_energy(coeffs, spins))
