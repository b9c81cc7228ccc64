"""Sparse operators on a truncated N-qubit plus single-boson Hilbert space.

The tensor ordering is fixed once and for all: qubit 1 is the slowest index
and the boson the fastest, so a basis state reads ``|q1 q2 ... qN, n>``.
Every constructor returns a complex CSR matrix in canonical (sorted,
duplicate-free) form, so identical inputs give identical sparse layouts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "HilbertSpace",
    "annihilation",
    "creation",
    "number",
    "identity",
    "field_linear",
    "field_quadratic",
    "pair_field",
    "pauli",
    "photon_parity",
]

_PAULI = {
    "x": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    "y": np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    "z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
}


@dataclass(frozen=True)
class HilbertSpace:
    """Truncation descriptor: ``n_qubits`` two-level systems and one bosonic
    mode kept up to photon number ``n_max`` (inclusive)."""

    n_qubits: int
    n_max: int

    def __post_init__(self) -> None:
        if self.n_qubits < 1:
            raise ValueError(f"n_qubits must be >= 1, got {self.n_qubits}")
        if self.n_max < 0:
            raise ValueError(f"n_max must be >= 0, got {self.n_max}")

    @property
    def boson_dim(self) -> int:
        return self.n_max + 1

    @property
    def qubit_dim(self) -> int:
        return 2**self.n_qubits

    @property
    def dim(self) -> int:
        return self.qubit_dim * self.boson_dim


def _canon(m: sp.spmatrix) -> sp.csr_matrix:
    out = sp.csr_matrix(m, dtype=complex)
    out.sum_duplicates()
    out.sort_indices()
    return out


def _boson_destroy(n_max: int) -> sp.csr_matrix:
    amps = np.sqrt(np.arange(1, n_max + 1, dtype=float))
    return _canon(sp.diags(amps, offsets=1, shape=(n_max + 1, n_max + 1)))


def _lift_boson(space: HilbertSpace, op: sp.spmatrix) -> sp.csr_matrix:
    return _canon(sp.kron(sp.identity(space.qubit_dim), op))


def annihilation(space: HilbertSpace) -> sp.csr_matrix:
    """Photon annihilation operator, amplitude sqrt(n) on |n> -> |n-1>."""
    return _lift_boson(space, _boson_destroy(space.n_max))


def creation(space: HilbertSpace) -> sp.csr_matrix:
    """Photon creation operator, the adjoint of :func:`annihilation`."""
    return _canon(annihilation(space).conjugate().T)


def number(space: HilbertSpace) -> sp.csr_matrix:
    """Photon number operator with diagonal 0, 1, ..., n_max."""
    diag = np.arange(space.boson_dim, dtype=float)
    return _lift_boson(space, sp.diags(diag))


def identity(space: HilbertSpace) -> sp.csr_matrix:
    return _canon(sp.identity(space.dim))


def field_linear(space: HilbertSpace) -> sp.csr_matrix:
    """Field quadrature a + a^dag.  Hermitian, flips photon parity."""
    a = _boson_destroy(space.n_max)
    return _lift_boson(space, a + a.conjugate().T)


def field_quadratic(space: HilbertSpace) -> sp.csr_matrix:
    """(a + a^dag)^2 computed as the square of the truncated quadrature.

    Squaring after truncation keeps the operator positive semidefinite.  The
    price is an edge artifact: at n_max = 2 the photon block is
    [[1, 0, sqrt(2)], [0, 3, 0], [sqrt(2), 0, 2]], whose corner entry is 2
    rather than the exact 2*n_max + 1 = 5, because the upward a^dag a^dag
    path is clipped.  Convergence control in the spectrum layer pushes this
    edge out of the retained levels.
    """
    a = _boson_destroy(space.n_max)
    f = a + a.conjugate().T
    return _lift_boson(space, f @ f)


def pair_field(space: HilbertSpace) -> sp.csr_matrix:
    """Pair operator a^dag a^dag + a a on the truncated space."""
    a = _boson_destroy(space.n_max)
    aa = a @ a
    return _lift_boson(space, aa + aa.conjugate().T)


def pauli(space: HilbertSpace, qubit_index: int, axis: str) -> sp.csr_matrix:
    """Pauli operator on one qubit, identity elsewhere.

    Parameters
    ----------
    qubit_index : int
        1-based position in the tensor order, 1 <= qubit_index <= n_qubits.
    axis : {'x', 'y', 'z'}
    """
    if axis not in _PAULI:
        raise ValueError(f"axis must be one of 'x', 'y', 'z', got {axis!r}")
    if not 1 <= qubit_index <= space.n_qubits:
        raise ValueError(
            f"qubit_index {qubit_index} out of range 1..{space.n_qubits}"
        )
    left = 2 ** (qubit_index - 1)
    right = 2 ** (space.n_qubits - qubit_index)
    op = sp.kron(sp.identity(left), sp.csr_matrix(_PAULI[axis]))
    op = sp.kron(op, sp.identity(right * space.boson_dim))
    return _canon(op)


def photon_parity(space: HilbertSpace) -> sp.csr_matrix:
    """Diagonal operator (-1)^(a^dag a), identity on the qubits."""
    diag = (-1.0) ** np.arange(space.boson_dim)
    return _lift_boson(space, sp.diags(diag))
