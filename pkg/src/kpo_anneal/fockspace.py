"""Truncated Fock spaces for one or two bosonic modes.

Operators are stored dense (complex128); a banded diagonal view can be
extracted for the integrator, which exploits that every operator used by the
model is a short sum of matrix diagonals (bandwidth <= 2 per mode before
tensoring).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Truncation",
    "ComplexOperator",
    "DensityMatrix",
    "annihilation",
    "creation",
    "number_op",
    "identity",
    "tensor",
    "fock_state",
    "coherent_state",
]


@dataclass(frozen=True)
class Truncation:
    """Per-mode Fock-space cutoffs; dims[m] levels are kept for mode m."""

    dims: tuple[int, ...]

    def __post_init__(self):
        if len(self.dims) not in (1, 2):
            raise ValueError("only one- and two-mode spaces are supported")
        for d in self.dims:
            if d < 2:
                raise ValueError(f"dim_per_mode must be >= 2, got {d}")

    @property
    def n_modes(self) -> int:
        return len(self.dims)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))


@dataclass
class ComplexOperator:
    """Dense operator on the full (tensored) truncated space."""

    trunc: Truncation
    matrix: np.ndarray

    def __post_init__(self):
        d = self.trunc.total_dim
        if self.matrix.shape != (d, d):
            raise ValueError(f"matrix shape {self.matrix.shape} != ({d}, {d})")
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.complex128)

    def dag(self) -> "ComplexOperator":
        return ComplexOperator(self.trunc, self.matrix.conj().T)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        scale = max(np.abs(self.matrix).max(), 1.0)
        return bool(np.abs(self.matrix - self.matrix.conj().T).max() <= tol * scale)

    def diagonals(self, tol: float = 0.0):
        """Banded view: (offsets, values) with values[d, i] = M[i, i + offsets[d]].

        Rows are padded to the full dimension with zeros outside the valid
        index range, so values[d] can be indexed by row unconditionally.
        Only diagonals with some |entry| > tol are returned.
        """
        m = self.matrix
        D = m.shape[0]
        offsets = []
        vals = []
        for k in range(-(D - 1), D):
            diag = np.diagonal(m, offset=k)
            if np.abs(diag).max(initial=0.0) > tol:
                row = np.zeros(D, dtype=np.complex128)
                if k >= 0:
                    row[: D - k] = diag
                else:
                    row[-k:] = diag
                offsets.append(k)
                vals.append(row)
        if not offsets:
            return np.zeros(0, dtype=np.int64), np.zeros((0, D), dtype=np.complex128)
        return np.asarray(offsets, dtype=np.int64), np.asarray(vals)


@dataclass
class DensityMatrix:
    """State of the truncated system with cheap and costly validity checks."""

    trunc: Truncation
    matrix: np.ndarray

    def __post_init__(self):
        d = self.trunc.total_dim
        if self.matrix.shape != (d, d):
            raise ValueError(f"matrix shape {self.matrix.shape} != ({d}, {d})")
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.complex128)

    @classmethod
    def from_state(cls, trunc: Truncation, psi: np.ndarray) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=np.complex128).reshape(-1)
        if psi.shape[0] != trunc.total_dim:
            raise ValueError("state vector length does not match truncation")
        return cls(trunc, np.outer(psi, psi.conj()))

    @classmethod
    def vacuum(cls, trunc: Truncation) -> "DensityMatrix":
        psi = np.zeros(trunc.total_dim, dtype=np.complex128)
        psi[0] = 1.0
        return cls(trunc, np.outer(psi, psi.conj()))

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def hermiticity_error(self) -> float:
        scale = max(np.abs(self.matrix).max(), 1e-300)
        return float(np.abs(self.matrix - self.matrix.conj().T).max() / scale)

    def min_eigenvalue(self) -> float:
        """Smallest eigenvalue; O(D^3), intended for readout times only."""
        return float(np.linalg.eigvalsh(self.matrix)[0])

    def validate(self, check_positivity: bool = False):
        """Raise ValueError on violated invariants.

        Hermiticity within 1e-10 (relative) and unit trace within 1e-9 are
        always checked; positivity (min eig >= -1e-7) only on request because
        the eigendecomposition dominates the cost at two-mode dims.
        """
        herm = self.hermiticity_error()
        if herm > 1e-10:
            raise ValueError(f"density matrix not Hermitian: relative error {herm:.3e}")
        tr = self.trace()
        if abs(tr - 1.0) > 1e-9:
            raise ValueError(f"density matrix trace {tr} != 1")
        if check_positivity:
            lam = self.min_eigenvalue()
            if lam < -1e-7:
                raise ValueError(f"density matrix not positive: min eigenvalue {lam:.3e}")

    def expectation(self, op: ComplexOperator) -> complex:
        return complex(np.trace(op.matrix @ self.matrix))


def _a_single(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=np.float64)), 1).astype(np.complex128)


def _embed(trunc: Truncation, mode: int, m: np.ndarray) -> np.ndarray:
    if mode < 0 or mode >= trunc.n_modes:
        raise ValueError(f"mode index {mode} out of range for {trunc.n_modes} modes")
    if trunc.n_modes == 1:
        return m
    eyes = [np.eye(d, dtype=np.complex128) for d in trunc.dims]
    parts = list(eyes)
    parts[mode] = m
    return np.kron(parts[0], parts[1])


def annihilation(trunc: Truncation, mode: int = 0) -> ComplexOperator:
    """Annihilation operator of one mode, embedded in the full space."""
    return ComplexOperator(trunc, _embed(trunc, mode, _a_single(trunc.dims[mode])))


def creation(trunc: Truncation, mode: int = 0) -> ComplexOperator:
    return ComplexOperator(trunc, _embed(trunc, mode, _a_single(trunc.dims[mode]).conj().T))


def number_op(trunc: Truncation, mode: int = 0) -> ComplexOperator:
    n = np.diag(np.arange(trunc.dims[mode], dtype=np.float64)).astype(np.complex128)
    return ComplexOperator(trunc, _embed(trunc, mode, n))


def identity(trunc: Truncation) -> ComplexOperator:
    return ComplexOperator(trunc, np.eye(trunc.total_dim, dtype=np.complex128))


def tensor(a: ComplexOperator, b: ComplexOperator) -> ComplexOperator:
    """Kronecker product of two single-mode operators -> two-mode operator."""
    if a.trunc.n_modes != 1 or b.trunc.n_modes != 1:
        raise ValueError("tensor expects single-mode operands")
    joint = Truncation((a.trunc.dims[0], b.trunc.dims[0]))
    return ComplexOperator(joint, np.kron(a.matrix, b.matrix))


def fock_state(dim: int, n: int) -> np.ndarray:
    if not 0 <= n < dim:
        raise ValueError(f"Fock level {n} outside truncated space of dim {dim}")
    psi = np.zeros(dim, dtype=np.complex128)
    psi[n] = 1.0
    return psi


def coherent_state(dim: int, alpha: complex) -> np.ndarray:
    """Normalized truncated coherent state |alpha>.

    Refuses amplitudes whose photon number distribution does not fit in the
    truncation (|alpha|^2 > dim/2), since the renormalized tail would be
    dominated by truncation garbage.
    """
    n2 = abs(alpha) ** 2
    if n2 > 0.5 * dim:
        raise ValueError(
            f"|alpha|^2 = {n2:.3f} too large for truncated dim {dim}; "
            f"need dim >= {2 * n2:.0f}"
        )
    n = np.arange(dim)
    # exp(-|a|^2/2) * alpha^n / sqrt(n!) with logs to dodge overflow
    logfact = np.concatenate(([0.0], np.cumsum(np.log(np.arange(1, dim)))))
    mag = np.exp(-0.5 * n2 + n * np.log(abs(alpha)) - 0.5 * logfact) if alpha != 0 else None
    if alpha == 0:
        psi = np.zeros(dim, dtype=np.complex128)
        psi[0] = 1.0
        return psi
    phase = np.exp(1j * n * np.angle(alpha))
    psi = mag * phase
    return psi / math.sqrt(float(np.vdot(psi, psi).real))
