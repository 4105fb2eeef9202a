"""Integrator tests.

The dense right-hand side is checked against a Kronecker-product
superoperator assembled independently here, and the integrator is checked
against closed-form decay laws on subspaces where the Kerr term is inert
(states supported on n = 0, 1).
"""

import math
import warnings

import numpy as np
import pytest

from conftest import TWO_PI, one_mode_params, small_schedule, two_mode_params

from kpo_anneal import _kernels
from kpo_anneal.drives import DriveSettings, ModeParams
from kpo_anneal.evolve import (
    IntegrationError,
    IntegratorConfig,
    integrate,
    lindblad_rhs,
    stability_dt,
)
from kpo_anneal.fockspace import DensityMatrix, Truncation, fock_state, number_op
from kpo_anneal.model import SystemParams, collapse_ops, hamiltonian

needs_numba = pytest.mark.skipif(not _kernels.USING_NUMBA, reason="numba unavailable")


def _superoperator(h, channels):
    """Row-major vectorization: vec(A rho B) = kron(A, B.T) vec(rho)."""
    d = h.shape[0]
    eye = np.eye(d)
    sup = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for op, rate in channels:
        o = op.matrix if hasattr(op, "matrix") else np.asarray(op)
        odo = o.conj().T @ o
        sup += rate * (2.0 * np.kron(o, o.conj())
                       - np.kron(odo, eye) - np.kron(eye, odo.T))
    return sup


def _random_density(rng, d):
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    m = m @ m.conj().T
    return m / np.trace(m).real


def test_rhs_matches_kron_superoperator(rng):
    for _ in range(20):
        d = int(rng.integers(2, 5))
        h = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        h = 0.5 * (h + h.conj().T)
        channels = [
            (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)),
             float(rng.uniform(0.1, 2.0)))
            for _ in range(int(rng.integers(1, 4)))
        ]
        rho = _random_density(rng, d)
        got = lindblad_rhs(rho, h, channels)
        want = (_superoperator(h, channels) @ rho.reshape(-1)).reshape(d, d)
        assert np.abs(got - want).max() < 1e-10 * np.abs(want).max()


def test_rhs_matches_kron_on_device_operators(rng):
    params = two_mode_params(dims=(4, 3), omega_d=(TWO_PI * 9e6, TWO_PI * 7e6))
    channels = collapse_ops(params)
    for t in (0.0, 0.35 * params.schedule.t_s, 250e-9):
        h = hamiltonian(params, t).matrix
        rho = _random_density(rng, h.shape[0])
        got = lindblad_rhs(rho, h, channels)
        want = (_superoperator(h, channels) @ rho.reshape(-1)).reshape(h.shape)
        assert np.abs(got - want).max() < 1e-10 * np.abs(want).max()


def test_rhs_trace_free_and_hermiticity_preserving(rng):
    params = one_mode_params(dim=7, omega_d=TWO_PI * 9e6)
    h = hamiltonian(params, 50e-9).matrix
    rho = _random_density(rng, 7)
    k = lindblad_rhs(rho, h, collapse_ops(params))
    assert abs(np.trace(k)) < 1e-12 * np.abs(k).max()
    assert np.abs(k - k.conj().T).max() < 1e-12 * np.abs(k).max()


def test_photon_number_decay_matches_exponential():
    # gamma = 0: the only channel is (a, kappa/2), so <n>(t) = exp(-kappa t).
    # The state stays inside n <= 1 where the Kerr term vanishes.
    params = one_mode_params(dim=6, p=0.0, omega_d=0.0, gamma=0.0,
                             delta0=0.0, chirped=False)
    kappa = params.modes[0].kappa_e + params.modes[0].kappa_i
    rho0 = DensityMatrix.from_state(params.trunc, fock_state(6, 1))
    times = np.linspace(0.0, 450e-9, 10)
    traj = integrate(params, times, rho0=rho0)
    n_op = number_op(params.trunc)
    for t, dm in zip(traj.times, traj.states):
        got = dm.expectation(n_op).real
        assert abs(got - math.exp(-kappa * t)) < 1e-6


def test_coherence_decay_matches_dephasing_rate():
    # kappa_e = 0 and kappa_i = 2 gamma leave only the (n, gamma) channel:
    # |rho_01|(t) = 0.5 exp(-gamma t).
    gamma = TWO_PI * 0.5e6
    mode = ModeParams(omega_r=TWO_PI * 9.88e9, kerr=-TWO_PI * 12.6e6,
                      kappa_e=0.0, kappa_i=2.0 * gamma, gamma=gamma)
    params = SystemParams(
        trunc=Truncation((4,)), modes=[mode], drives=[DriveSettings(p=0.0)],
        schedule=small_schedule(), g=0.0, theta_p=0.0, delta0=0.0, chirped=False,
    )
    psi = (fock_state(4, 0) + fock_state(4, 1)) / math.sqrt(2.0)
    rho0 = DensityMatrix.from_state(params.trunc, psi)
    times = np.linspace(0.0, 400e-9, 9)
    traj = integrate(params, times, rho0=rho0)
    for t, dm in zip(traj.times, traj.states):
        assert abs(abs(dm.matrix[0, 1]) - 0.5 * math.exp(-gamma * t)) < 1e-6


@needs_numba
def test_backends_agree_end_to_end(rng):
    params = two_mode_params(dims=(6, 5), omega_d=(TWO_PI * 9e6, TWO_PI * 7e6))
    times = np.linspace(0.0, 500e-9, 6)
    runs = {}
    for backend in ("numba", "numpy"):
        runs[backend] = integrate(params, times,
                                  IntegratorConfig(backend=backend))
    assert runs["numba"].diagnostics.steps == runs["numpy"].diagnostics.steps
    for da, db in zip(runs["numba"].states, runs["numpy"].states):
        assert np.abs(da.matrix - db.matrix).max() < 1e-12


def test_rk4_fourth_order_convergence():
    params = one_mode_params(dim=8, omega_d=TWO_PI * 24e6)
    times = [0.0, 400e-9]
    finals = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # coarse steps trip the dt guideline
        for div in (1, 2, 4, 16):
            cfg = IntegratorConfig(dt=1e-9 / div)
            finals.append(integrate(params, times, cfg).states[-1].matrix)
    ref = finals[-1]
    e1 = np.abs(finals[0] - ref).max()
    e2 = np.abs(finals[1] - ref).max()
    e3 = np.abs(finals[2] - ref).max()
    assert e3 > 1e-14  # ratios must sit above roundoff to be meaningful
    assert 13.0 < e1 / e2 < 17.5
    assert 13.0 < e2 / e3 < 17.5


def test_diagnostics_within_hygiene_bounds():
    params = one_mode_params(dim=10, omega_d=TWO_PI * 24e6)
    cfg = IntegratorConfig(check_positivity=True)
    traj = integrate(params, [0.0, 250e-9, 500e-9], cfg)
    d = traj.diagnostics
    assert d.steps > 0 and d.dt > 0.0
    assert d.trace_drift < 1e-6
    assert d.trace_step_max < 1e-6
    assert d.hermiticity_max < 1e-10
    assert d.min_eigenvalue is not None and d.min_eigenvalue > -1e-6


def test_extra_sample_does_not_perturb_dynamics():
    # With a commensurate explicit step every segment uses the same grid, so
    # inserting a sample point must not change the trajectory at all.
    params = one_mode_params(dim=8, omega_d=TWO_PI * 24e6)
    cfg = IntegratorConfig(dt=0.25e-9)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = integrate(params, [0.0, 500e-9], cfg)
        b = integrate(params, [0.0, 350e-9, 500e-9], cfg)
    assert np.abs(a.states[-1].matrix - b.states[-1].matrix).max() < 1e-13


def test_sample_times_and_initial_state():
    params = one_mode_params(dim=6)
    req = [300e-9, 0.0, 150e-9]
    traj = integrate(params, req)
    assert np.array_equal(traj.times, np.sort(req))
    vac = DensityMatrix.vacuum(params.trunc).matrix
    assert np.abs(traj.states[0].matrix - vac).max() < 1e-14


def test_observable_callback_replaces_states():
    params = one_mode_params(dim=8)
    times = [0.0, 200e-9, 400e-9]
    n_op = number_op(params.trunc)
    with_states = integrate(params, times)
    obs = integrate(params, times,
                    observable=lambda t, dm: dm.expectation(n_op).real)
    assert obs.states is None
    assert len(obs.observables) == len(times)
    for dm, val in zip(with_states.states, obs.observables):
        assert abs(dm.expectation(n_op).real - val) < 1e-12


def test_renormalize_semantics():
    params = one_mode_params(dim=8)
    raw = integrate(params, [0.0, 400e-9], IntegratorConfig(renormalize=False))
    norm = integrate(params, [0.0, 400e-9], IntegratorConfig(renormalize=True))
    drift = raw.diagnostics.trace_drift
    assert abs(raw.states[-1].trace().real - 1.0) <= drift + 1e-12
    assert abs(norm.states[-1].trace().real - 1.0) < 1e-12


def test_stability_dt_scales_with_safety():
    params = one_mode_params(dim=10, omega_d=TWO_PI * 24e6)
    full = stability_dt(params, 500e-9, safety=2.5)
    half = stability_dt(params, 500e-9, safety=1.25)
    assert half == pytest.approx(0.5 * full, rel=1e-12)
    assert 0.0 < full < 1e-8


def test_adaptive_agrees_with_rk4():
    params = one_mode_params(dim=8, omega_d=TWO_PI * 24e6)
    times = [0.0, 200e-9]
    fixed = integrate(params, times, IntegratorConfig(method="rk4", dt=0.125e-9))
    loose = integrate(params, times,
                      IntegratorConfig(method="adaptive", rtol=1e-10))
    assert loose.diagnostics.backend == "adaptive"
    assert np.abs(fixed.states[-1].matrix - loose.states[-1].matrix).max() < 1e-6


def test_guideline_warning_on_coarse_step():
    params = one_mode_params(dim=6, omega_d=TWO_PI * 24e6)
    with pytest.warns(UserWarning, match="resolution guideline"):
        try:
            integrate(params, [0.0, 50e-9], IntegratorConfig(dt=2e-9))
        except IntegrationError:
            pass  # only the warning is under test here


def test_unstable_step_raises():
    params = one_mode_params(dim=12, omega_d=TWO_PI * 24e6)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(IntegrationError):
            integrate(params, [0.0, 400e-9], IntegratorConfig(dt=5e-9))


def test_input_validation():
    params = one_mode_params(dim=6)
    with pytest.raises(ValueError):
        integrate(params, [])
    with pytest.raises(ValueError):
        integrate(params, [-1e-9, 100e-9])
    with pytest.raises(ValueError):
        integrate(params, [0.0, 100e-9],
                  rho0=DensityMatrix.vacuum(Truncation((5,))))


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(method="verlet")
    with pytest.raises(ValueError):
        IntegratorConfig(backend="fortran")
    with pytest.raises(ValueError):
        IntegratorConfig(dt=-1e-9)
    with pytest.raises(ValueError):
        IntegratorConfig(cfl_safety=5.0)
