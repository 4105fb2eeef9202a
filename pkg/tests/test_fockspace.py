"""Operators, states, and density matrices on truncated Fock spaces."""

import math

import numpy as np
import pytest

from kpo_anneal.fockspace import (
    ComplexOperator,
    DensityMatrix,
    Truncation,
    annihilation,
    coherent_state,
    creation,
    fock_state,
    identity,
    number_op,
    tensor,
)


def test_truncation_total_dim():
    assert Truncation((7,)).total_dim == 7
    assert Truncation((5, 6)).total_dim == 30
    assert Truncation((5, 6)).n_modes == 2


def test_annihilation_matrix_elements():
    a = annihilation(Truncation((6,)), 0).matrix
    for n in range(1, 6):
        assert a[n - 1, n] == pytest.approx(math.sqrt(n))
    assert np.count_nonzero(a) == 5


def test_creation_is_dagger_of_annihilation():
    tr = Truncation((6,))
    assert np.array_equal(creation(tr, 0).matrix, annihilation(tr, 0).matrix.conj().T)


def test_number_operator_diagonal():
    tr = Truncation((7,))
    n = number_op(tr, 0).matrix
    assert np.array_equal(np.diag(n).real, np.arange(7))
    ad_a = creation(tr, 0).matrix @ annihilation(tr, 0).matrix
    assert np.allclose(n, ad_a)


def test_commutator_holds_below_truncation_edge():
    tr = Truncation((8,))
    a = annihilation(tr, 0).matrix
    comm = a @ a.conj().T - a.conj().T @ a
    # [a, a^dag] = 1 except in the top Fock state, where truncation bites
    assert np.allclose(np.diag(comm)[:-1], 1.0)
    assert np.diag(comm)[-1] == pytest.approx(-(8 - 1) - 0.0)


def test_tensor_mode_ordering():
    tr = Truncation((4, 3))
    n_l = number_op(tr, 0).matrix
    n_r = number_op(tr, 1).matrix
    psi = np.kron(fock_state(4, 2), fock_state(3, 1))
    rho = DensityMatrix.from_state(tr, psi)
    assert rho.expectation(ComplexOperator(tr, n_l)).real == pytest.approx(2.0)
    assert rho.expectation(ComplexOperator(tr, n_r)).real == pytest.approx(1.0)


def test_tensor_matches_kron():
    a = ComplexOperator(Truncation((3,)), np.diag([1.0, 2.0, 3.0]).astype(complex))
    b = ComplexOperator(Truncation((2,)), np.array([[0, 1], [1, 0]], dtype=complex))
    joint = tensor(a, b)
    assert joint.trunc.dims == (3, 2)
    assert np.array_equal(joint.matrix, np.kron(a.matrix, b.matrix))


def test_is_hermitian_and_dag():
    tr = Truncation((4,))
    a = annihilation(tr, 0)
    assert not a.is_hermitian()
    assert not a.dag().is_hermitian()
    assert np.array_equal(a.dag().matrix, a.matrix.conj().T)
    h = ComplexOperator(tr, a.matrix + a.dag().matrix)
    assert h.is_hermitian()
    assert identity(tr).is_hermitian()


def test_diagonals_round_trip(rng):
    tr = Truncation((9,))
    mat = np.zeros((9, 9), dtype=np.complex128)
    for off in (-3, -1, 0, 2):
        idx = np.arange(max(0, -off), min(9, 9 - off))
        mat[idx, idx + off] = rng.normal(size=idx.size) + 1j * rng.normal(size=idx.size)
    offs, vals = ComplexOperator(tr, mat).diagonals(tol=0.0)
    rebuilt = np.zeros_like(mat)
    for off, row in zip(offs, vals):
        idx = np.arange(max(0, -off), min(9, 9 - off))
        rebuilt[idx, idx + off] = row[idx]
    assert np.array_equal(rebuilt, mat)
    assert set(offs.tolist()) == {-3, -1, 0, 2}


def test_fock_state_bounds():
    psi = fock_state(5, 3)
    assert psi[3] == 1.0 and np.count_nonzero(psi) == 1
    with pytest.raises(ValueError):
        fock_state(5, 5)


def test_coherent_state_amplitude_ratios():
    alpha = 1.3 - 0.4j
    psi = coherent_state(20, alpha)
    assert np.vdot(psi, psi).real == pytest.approx(1.0)
    for n in range(0, 10):
        assert psi[n + 1] / psi[n] == pytest.approx(alpha / math.sqrt(n + 1))


def test_coherent_state_rejects_overfull_truncation():
    with pytest.raises(ValueError, match="dim"):
        coherent_state(10, 3.0)  # |alpha|^2 = 9 > 10/2


def test_coherent_state_zero_is_vacuum():
    psi = coherent_state(6, 0.0)
    assert np.array_equal(psi, fock_state(6, 0))


def test_density_matrix_basics():
    tr = Truncation((6,))
    rho = DensityMatrix.vacuum(tr)
    assert rho.trace() == pytest.approx(1.0)
    assert rho.hermiticity_error() == 0.0
    assert rho.min_eigenvalue() == pytest.approx(0.0, abs=1e-14)


def test_from_state_is_pure(rng):
    tr = Truncation((8,))
    psi = rng.normal(size=8) + 1j * rng.normal(size=8)
    psi /= np.linalg.norm(psi)
    rho = DensityMatrix.from_state(tr, psi)
    assert np.trace(rho.matrix @ rho.matrix).real == pytest.approx(1.0)
    op = ComplexOperator(tr, np.diag(np.arange(8.0)).astype(complex))
    assert rho.expectation(op) == pytest.approx(np.vdot(psi, op.matrix @ psi))


def test_validate_rejects_bad_states():
    tr = Truncation((4,))
    good = DensityMatrix.vacuum(tr)
    good.validate()

    bad_trace = DensityMatrix(tr, 2.0 * good.matrix)
    with pytest.raises(ValueError):
        bad_trace.validate()

    mat = good.matrix.copy()
    mat[0, 1] = 0.5  # not mirrored
    with pytest.raises(ValueError):
        DensityMatrix(tr, mat).validate()

    mat = np.diag([1.5, -0.5, 0.0, 0.0]).astype(complex)
    DensityMatrix(tr, mat).validate()  # positivity is opt-in
    with pytest.raises(ValueError):
        DensityMatrix(tr, mat).validate(check_positivity=True)


def test_hermiticity_error_is_relative():
    tr = Truncation((3,))
    mat = np.diag([0.5, 0.3, 0.2]).astype(complex)
    mat[0, 1] = 1e-3
    err = DensityMatrix(tr, mat).hermiticity_error()
    assert 0 < err < 1
