"""Shared parameter factories for the test suite.

Device constants follow the two-resonator setup the package models; tests
that need different rates or truncations override fields via replace().
"""

import numpy as np
import pytest

from kpo_anneal.drives import DriveSettings, ModeParams, PulseSchedule
from kpo_anneal.fockspace import Truncation
from kpo_anneal.model import SystemParams

TWO_PI = 2.0 * np.pi


def mode_l(gamma=TWO_PI * 7.7e3):
    return ModeParams(
        omega_r=TWO_PI * 9.88e9,
        kerr=-TWO_PI * 12.6e6,
        kappa_e=TWO_PI * 0.75e6,
        kappa_i=TWO_PI * 0.31e6,
        gamma=gamma,
        domega_di=TWO_PI * 2.60e12,
    )


def mode_r(gamma=TWO_PI * 7.7e3):
    return ModeParams(
        omega_r=TWO_PI * 9.88e9,
        kerr=-TWO_PI * 12.6e6,
        kappa_e=TWO_PI * 0.95e6,
        kappa_i=TWO_PI * 0.35e6,
        gamma=gamma,
        domega_di=TWO_PI * 2.65e12,
    )


def small_schedule(**kw):
    base = dict(t_s=100e-9, t_sp=100e-9, t_pp=400e-9, t_r=150e-9, t_rd=50e-9,
                n_pump=2.0, n_signal=1.0)
    base.update(kw)
    return PulseSchedule(**base)


def one_mode_params(dim=10, p=TWO_PI * 30e6, omega_d=0.0, theta_s=1.5 * np.pi,
                    gamma=TWO_PI * 7.7e3, delta0=-TWO_PI * 20e6, chirped=True,
                    schedule=None):
    return SystemParams(
        trunc=Truncation((dim,)),
        modes=[mode_l(gamma)],
        drives=[DriveSettings(p=p, omega_d=omega_d, theta_s=theta_s)],
        schedule=schedule or small_schedule(),
        g=0.0,
        theta_p=0.0,
        delta0=delta0,
        chirped=chirped,
    )


def two_mode_params(dims=(8, 7), p=(TWO_PI * 30e6, TWO_PI * 34e6), omega_d=(0.0, 0.0),
                    theta_s=1.5 * np.pi, gamma=TWO_PI * 7.7e3, g=TWO_PI * 6.9e6,
                    theta_p=0.0, delta0=-TWO_PI * 20e6, chirped=True, schedule=None):
    return SystemParams(
        trunc=Truncation(dims),
        modes=[mode_l(gamma), mode_r(gamma)],
        drives=[DriveSettings(p=p[0], omega_d=omega_d[0], theta_s=theta_s),
                DriveSettings(p=p[1], omega_d=omega_d[1], theta_s=theta_s)],
        schedule=schedule or small_schedule(),
        g=g,
        theta_p=theta_p,
        delta0=delta0,
        chirped=chirped,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20260815)
