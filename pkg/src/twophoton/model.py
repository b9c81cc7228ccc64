"""Two-photon qubit-cavity Hamiltonians and related model-level operators.

All energies are quoted in units where the cavity frequency sets the scale,
so omega_c = 1 is the usual choice; nothing below depends on it.
"""

from __future__ import annotations

import enum
import re
import warnings
from dataclasses import dataclass

import scipy.sparse as sp

from .operators import (
    HilbertSpace,
    creation,
    annihilation,
    field_linear,
    field_quadratic,
    pair_field,
    pauli,
)

__all__ = [
    "CouplingForm",
    "ModelParams",
    "build_hamiltonian",
    "collapse_coupling",
    "build_drive_operator",
]


class CouplingForm(enum.Enum):
    """Shape of the two-photon interaction term.

    FULL_QUADRATIC couples through (a + a^dag)^2, PAIR_ONLY through
    a^dag a^dag + a a.  The two differ by 2 a^dag a + 1.
    """

    FULL_QUADRATIC = "full_quadratic"
    PAIR_ONLY = "pair_only"

    @classmethod
    def parse(cls, value: "CouplingForm | str") -> "CouplingForm":
        if isinstance(value, cls):
            return value
        token = str(value).strip().lower().replace("-", "_")
        aliases = {
            "full_quadratic": cls.FULL_QUADRATIC,
            "fullquadratic": cls.FULL_QUADRATIC,
            "pair_only": cls.PAIR_ONLY,
            "paironly": cls.PAIR_ONLY,
        }
        try:
            return aliases[token]
        except KeyError:
            raise ValueError(f"unknown coupling form {value!r}") from None


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the N-qubit two-photon model.

    j_interspin adds a nearest-neighbour sigma_x sigma_x chain term with open
    boundaries (i = 1 .. N-1); zero disables it.
    """

    omega_c: float = 1.0
    omega_q: float = 2.0
    g2: float = 0.0
    n_qubits: int = 1
    coupling_form: CouplingForm = CouplingForm.FULL_QUADRATIC
    j_interspin: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "coupling_form", CouplingForm.parse(self.coupling_form)
        )
        if self.omega_c <= 0:
            raise ValueError(f"omega_c must be > 0, got {self.omega_c}")
        if self.g2 < 0:
            raise ValueError(f"g2 must be >= 0, got {self.g2}")
        if self.j_interspin < 0:
            raise ValueError(f"j_interspin must be >= 0, got {self.j_interspin}")
        if self.n_qubits < 1:
            raise ValueError(f"n_qubits must be >= 1, got {self.n_qubits}")


def build_hamiltonian(params: ModelParams, space: HilbertSpace) -> sp.csr_matrix:
    """Assemble the model Hamiltonian on the given truncated space.

    H = omega_c a^dag a + (omega_q / 2) sum_i sigma_z^i
        + g2 sum_i sigma_x^i F + J sum_{i<N} sigma_x^i sigma_x^{i+1}

    with F the quadratic field operator selected by ``params.coupling_form``.
    The result is Hermitian and commutes with the photon parity.
    """
    if space.n_qubits != params.n_qubits:
        raise ValueError(
            f"space has {space.n_qubits} qubits but params expect "
            f"{params.n_qubits}"
        )
    h = params.omega_c * (creation(space) @ annihilation(space))
    if params.coupling_form is CouplingForm.FULL_QUADRATIC:
        f_op = field_quadratic(space)
    else:
        f_op = pair_field(space)
    for i in range(1, params.n_qubits + 1):
        if params.omega_q != 0.0:
            h = h + 0.5 * params.omega_q * pauli(space, i, "z")
        if params.g2 != 0.0:
            h = h + params.g2 * (pauli(space, i, "x") @ f_op)
    if params.j_interspin != 0.0:
        for i in range(1, params.n_qubits):
            h = h + params.j_interspin * (
                pauli(space, i, "x") @ pauli(space, i + 1, "x")
            )
    h = sp.csr_matrix(h)
    h.sum_duplicates()
    h.sort_indices()
    return h


def collapse_coupling(params: ModelParams) -> float:
    """Critical coupling omega_c / (4 N) where the discrete spectrum ends.

    The closed form is derived for the full-quadratic interaction.  For the
    pair-only form the same number is returned but it is form-dependent, so a
    warning asks for numerical verification.
    """
    if params.coupling_form is CouplingForm.PAIR_ONLY:
        warnings.warn(
            "collapse coupling omega_c/(4N) is derived for the full-quadratic "
            "form; for pair_only it is form-dependent, verify numerically",
            UserWarning,
            stacklevel=2,
        )
    return params.omega_c / (4.0 * params.n_qubits)


_QUBIT_TARGET = re.compile(r"^qubit(?:\((\d+)\))?$")


def build_drive_operator(
    space: HilbertSpace, target: str, qubit_index: int = 1
) -> sp.csr_matrix:
    """Hermitian coupling operator for a coherent drive or an output port.

    ``target`` is either ``"cavity"`` (field quadrature a + a^dag) or
    ``"qubit"`` / ``"qubit(i)"`` (sigma_x on qubit i).  An explicit index in
    the target string wins over the ``qubit_index`` argument.
    """
    token = str(target).strip().lower()
    if token == "cavity":
        return field_linear(space)
    m = _QUBIT_TARGET.match(token)
    if m is None:
        raise ValueError(f"drive target must be 'cavity' or 'qubit(i)', got {target!r}")
    index = int(m.group(1)) if m.group(1) else qubit_index
    return pauli(space, index, "x")
