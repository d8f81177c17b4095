"""Constructors for the two-qubit and qutrit states, and the POVM-locality maps.

Every closed-form constructor here is written out term by term and does not
call :func:`protocol2_map`, so comparing the two is a genuine cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import DimensionMismatch, InvalidParameter
from .qcore import (
    BipartiteState,
    basis_projector,
    check_density_matrix,
    ket,
    partial_trace,
    projector,
    tensor,
)

FamilyTag = Literal["singlet", "state_q", "rho_G", "erasure", "rho_GM"]
FAMILIES: tuple[str, ...] = ("singlet", "state_q", "rho_G", "erasure", "rho_GM")


def _check_q(q: float) -> float:
    q = float(q)
    if not 0.0 <= q <= 1.0:
        raise InvalidParameter(f"q must lie in [0, 1], got {q}")
    return q


def qubit_identity(dim: int) -> np.ndarray:
    """Identity on span{|0>, |1>} embedded in ``C^dim``."""
    out = np.zeros((dim, dim), dtype=complex)
    out[0, 0] = out[1, 1] = 1.0
    return out


def singlet_vector(dim_a: int = 2, dim_b: int = 2) -> np.ndarray:
    return (np.kron(ket(0, dim_a), ket(1, dim_b)) - np.kron(ket(1, dim_a), ket(0, dim_b))) / np.sqrt(2)


def singlet_projector(dim_a: int = 2, dim_b: int = 2) -> np.ndarray:
    return projector(singlet_vector(dim_a, dim_b))


def singlet(dim_a: int = 2, dim_b: int = 2) -> BipartiteState:
    """Singlet (|01> - |10>)/sqrt(2), placed in the qubit (x) qubit corner block."""
    if dim_a < 2 or dim_b < 2:
        raise DimensionMismatch("singlet needs local dimensions of at least 2")
    return BipartiteState(singlet_projector(dim_a, dim_b), dim_a, dim_b)


def state_q(q: float) -> BipartiteState:
    """``q Psi- + (1 - q) |0><0| (x) 1/2`` on two qubits."""
    q = _check_q(q)
    noise = tensor(basis_projector(0, 2), np.eye(2) / 2)
    return BipartiteState(q * singlet_projector() + (1 - q) * noise, 2, 2)


def erasure_state(q: float) -> BipartiteState:
    """``q Psi- + (1 - q) |2><2| (x) 1_2/2`` on 3x3.

    Bob is embedded as a qutrit whose level |2> carries no population, which
    lets the d = 3 POVM-locality map act on this state directly.
    """
    q = _check_q(q)
    noise = tensor(basis_projector(2, 3), qubit_identity(3) / 2)
    return BipartiteState(q * singlet_projector(3, 3) + (1 - q) * noise, 3, 3)


def state_rho_G(q: float) -> BipartiteState:
    q = _check_q(q)
    p0 = basis_projector(0, 2)
    half_id = np.eye(2) / 2
    rho = (
        q * singlet_projector()
        + (2 - q) * tensor(p0, half_id)
        + q * tensor(half_id, p0)
        + (2 - q) * basis_projector(0, 4)
    ) / 4
    return BipartiteState(rho, 2, 2)


def state_rho_GM(q: float) -> BipartiteState:
    q = _check_q(q)
    p2 = basis_projector(2, 3)
    half_id = qubit_identity(3) / 2
    rho = (
        q * singlet_projector(3, 3)
        + (3 - q) * tensor(p2, half_id)
        + 2 * q * tensor(half_id, p2)
        + (6 - 2 * q) * basis_projector(8, 9)
    ) / 9
    return BipartiteState(rho, 3, 3)


def protocol2_map(rho0: BipartiteState, sigma_a: np.ndarray, sigma_b: np.ndarray) -> BipartiteState:
    """State whose POVM statistics are reproduced by running the rank-one
    simulation on top of a dichotomic local model for ``rho0``::

        (1/d^2) [rho0 + (d-1)(rho_A (x) sigma_B + sigma_A (x) rho_B) + (d-1)^2 sigma_A (x) sigma_B]
    """
    d = rho0.dim_a
    if rho0.dim_b != d:
        raise DimensionMismatch(f"protocol2_map needs equal local dimensions, got {rho0.dims}")
    sigma_a = check_density_matrix(sigma_a, d, "sigma_A")
    sigma_b = check_density_matrix(sigma_b, d, "sigma_B")
    rho_a = partial_trace(rho0, "A")
    rho_b = partial_trace(rho0, "B")
    out = (
        rho0.rho
        + (d - 1) * (tensor(rho_a, sigma_b) + tensor(sigma_a, rho_b))
        + (d - 1) ** 2 * tensor(sigma_a, sigma_b)
    ) / d**2
    return BipartiteState(out, d, d)


def protocol2_map_one_sided(rho0: BipartiteState, sigma_a: np.ndarray) -> BipartiteState:
    """Alice-only variant: ``(1/d) [rho0 + (d-1) sigma_A (x) rho_B]``."""
    d = rho0.dim_a
    sigma_a = check_density_matrix(sigma_a, d, "sigma_A")
    rho_b = partial_trace(rho0, "B")
    out = (rho0.rho + (d - 1) * tensor(sigma_a, rho_b)) / d
    return BipartiteState(out, d, rho0.dim_b)


@dataclass(frozen=True)
class StateFamily:
    tag: str
    q: float = 1.0

    def __post_init__(self) -> None:
        if self.tag not in FAMILIES:
            raise InvalidParameter(f"unknown state family {self.tag!r}; expected one of {FAMILIES}")
        _check_q(self.q)

    def build(self) -> BipartiteState:
        return family_state(self.tag, self.q)


def family_state(tag: str, q: float = 1.0) -> BipartiteState:
    builders = {
        "singlet": lambda _q: singlet(),
        "state_q": state_q,
        "rho_G": state_rho_G,
        "erasure": erasure_state,
        "rho_GM": state_rho_GM,
    }
    try:
        return builders[tag](q)
    except KeyError:
        raise InvalidParameter(f"unknown state family {tag!r}; expected one of {FAMILIES}") from None
