"""Pulse schedules, drive envelopes, and power-to-amplitude conversions.

All frequencies and rates are angular (rad/s) internally; times are seconds.
Conversions from instrument units (dBm, MHz/uA flux slope) live here so the
rest of the package never sees a dBm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HBAR = 1.054571817e-34  # J s

__all__ = [
    "HBAR",
    "ModeParams",
    "DriveSettings",
    "PulseSchedule",
    "envelope",
    "detuning_at",
    "rabi_from_power",
    "pump_amp_from_power",
    "coherent_amplitude",
]


@dataclass(frozen=True)
class ModeParams:
    """Fixed device constants of one resonator (angular units)."""

    omega_r: float  # resonance, rad/s
    kerr: float  # Kerr coefficient K, rad/s; negative for these devices
    kappa_e: float  # external coupling rate, rad/s
    kappa_i: float  # internal loss rate, rad/s
    gamma: float  # pure dephasing rate, rad/s
    domega_di: float = 0.0  # |d omega_r / d i|, rad/s per ampere (pump conversion)
    z0: float = 50.0  # line impedance, ohm

    def __post_init__(self):
        if self.kappa_e < 0 or self.kappa_i < 0 or self.gamma < 0:
            raise ValueError("rates must be non-negative")
        if self.kerr >= 0:
            raise ValueError("kerr must be negative (oscillation states are energy maxima)")


@dataclass(frozen=True)
class DriveSettings:
    """Peak drive amplitudes and phases for one mode."""

    p: float  # two-photon (pump) amplitude, rad/s
    omega_d: float = 0.0  # one-photon (signal) Rabi amplitude, rad/s
    theta_s: float = 0.0  # signal phase, rad

    def __post_init__(self):
        if self.p < 0 or self.omega_d < 0:
            raise ValueError("drive amplitudes must be non-negative")


@dataclass(frozen=True)
class PulseSchedule:
    """Trapezoidal timing shared by both drives (seconds).

    The pump and signal rise together over t_s; the signal holds for t_sp and
    falls over t_s (time-reversed rise), the pump holds for t_pp. Readout
    averages over [t_s + t_rd, t_s + t_rd + t_r], which must fit inside the
    pump plateau. t_sp = 0 disables the signal pulse entirely.
    """

    t_s: float
    t_sp: float
    t_pp: float
    t_r: float
    t_rd: float
    n_pump: float = 1.0
    n_signal: float = 1.0

    def __post_init__(self):
        for name in ("t_s", "t_sp", "t_pp", "t_r", "t_rd"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.t_s == 0:
            raise ValueError("t_s must be positive")
        if self.n_pump < 1 or self.n_signal < 1:
            raise ValueError("slope exponents must be >= 1")
        if self.t_rd + self.t_r > self.t_pp:
            raise ValueError(
                f"readout window t_rd + t_r = {self.t_rd + self.t_r} exceeds "
                f"pump plateau t_pp = {self.t_pp}"
            )

    @property
    def readout_window(self) -> tuple[float, float]:
        start = self.t_s + self.t_rd
        return (start, start + self.t_r)

    @property
    def signal_end(self) -> float:
        return 2 * self.t_s + self.t_sp

    def pump_envelope(self, t):
        return envelope(t, self.t_s, self.t_pp, self.n_pump)

    def signal_envelope(self, t):
        if self.t_sp == 0:
            return np.zeros_like(np.asarray(t, dtype=float)) if np.ndim(t) else 0.0
        return envelope(t, self.t_s, self.t_sp, self.n_signal)


def envelope(t, t_s: float, t_plateau: float, n: float):
    """Trapezoid with power-law slopes: (t/t_s)^n up, hold, time-reversed down.

    Returns a float for scalar t, an ndarray otherwise.
    """
    t_arr = np.asarray(t, dtype=float)
    t_off = t_s + t_plateau
    t_end = t_off + t_s
    out = np.zeros_like(t_arr)
    rising = (t_arr >= 0) & (t_arr < t_s)
    out = np.where(rising, np.power(np.clip(t_arr / t_s, 0.0, 1.0), n), out)
    out = np.where((t_arr >= t_s) & (t_arr <= t_off), 1.0, out)
    falling = (t_arr > t_off) & (t_arr < t_end)
    out = np.where(falling, np.power(np.clip((t_end - t_arr) / t_s, 0.0, 1.0), n), out)
    if np.ndim(t) == 0:
        return float(out)
    return out


def detuning_at(t, delta0: float, t_s: float, chirped: bool):
    """Detuning Delta(t): ramped linearly to zero over the rise when chirped,
    constant at delta0 otherwise."""
    if not chirped:
        if np.ndim(t) == 0:
            return float(delta0)
        return np.full_like(np.asarray(t, dtype=float), delta0)
    t_arr = np.asarray(t, dtype=float)
    out = np.where(t_arr < t_s, delta0 * (1.0 - t_arr / t_s), 0.0)
    out = np.where(t_arr < 0, delta0, out)
    if np.ndim(t) == 0:
        return float(out)
    return out


def rabi_from_power(p_dbm: float, kappa_e: float, omega_r: float) -> float:
    """One-photon Rabi amplitude from signal power at the input line.

    Omega_d = sqrt(P kappa_e / (hbar omega_r)), P in watts from dBm.
    """
    if kappa_e <= 0 or omega_r <= 0:
        raise ValueError("kappa_e and omega_r must be positive")
    p_watt = 1e-3 * 10.0 ** (p_dbm / 10.0)
    return float(np.sqrt(p_watt * kappa_e / (HBAR * omega_r)))


def pump_amp_from_power(p_dbm: float, domega_di: float, z0: float = 50.0) -> float:
    """Two-photon amplitude from pump power via the flux slope.

    p = (1/2) |d omega_r/d i| sqrt(2 / (Z_0 * 1000)) * 10^(P_dbm / 20).
    """
    if domega_di <= 0:
        raise ValueError("flux slope |d omega_r/d i| must be positive")
    if z0 <= 0:
        raise ValueError("line impedance must be positive")
    return float(0.5 * domega_di * np.sqrt(2.0 / (z0 * 1000.0)) * 10.0 ** (p_dbm / 20.0))


def coherent_amplitude(p: float, delta: float, kerr: float) -> float:
    """Semiclassical oscillation amplitude alpha = sqrt((p + Delta)/|K|).

    Below threshold (p + Delta <= 0) there is no oscillation: returns 0.
    """
    if kerr >= 0:
        raise ValueError("kerr must be negative")
    x = (p + delta) / abs(kerr)
    return float(np.sqrt(x)) if x > 0 else 0.0
