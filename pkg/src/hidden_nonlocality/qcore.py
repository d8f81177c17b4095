"""Dense linear algebra on small bipartite Hilbert spaces.

All composite indices follow the row-major convention ``index = a * dim_b + b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidPovm, InvalidState, NotHermitian

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10
MAX_TOTAL_DIM = 64

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (PAULI_X, PAULI_Y, PAULI_Z)


def ket(index: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def projector(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=complex).reshape(-1)
    return np.outer(vec, vec.conj())


def basis_projector(index: int, dim: int) -> np.ndarray:
    """Return ``|index><index|`` on ``C^dim``."""
    return projector(ket(index, dim))


def dagger(m: np.ndarray) -> np.ndarray:
    return np.asarray(m).conj().T


def hermiticity_error(m: np.ndarray) -> float:
    m = np.asarray(m)
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


def tensor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product of two square operators."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    for m in (a, b):
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"tensor expects square matrices, got shape {m.shape}")
    if a.shape[0] * b.shape[0] > MAX_TOTAL_DIM:
        raise DimensionMismatch(
            f"total dimension {a.shape[0] * b.shape[0]} exceeds the supported maximum {MAX_TOTAL_DIM}"
        )
    return np.kron(a, b)


# --------------------------------------------------------------------------
# Spectral decomposition


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray  # real, descending
    eigenvectors: np.ndarray  # orthonormal columns

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def hermitian_eigen(
    m: np.ndarray, *, tol: float = 1e-14, max_sweeps: int = 100
) -> SpectralDecomposition:
    """Diagonalize a Hermitian matrix with cyclic complex Jacobi rotations.

    Each rotation first removes the phase of the pivot ``a[p, q]`` and then
    applies the real symmetric Jacobi rotation to the resulting real 2x2 block.
    Sweeps stop once the off-diagonal Frobenius mass drops below
    ``tol * max(1, ||m||_F)``.

    Raises
    ------
    NotHermitian
        If ``max |m - m^dagger| > 1e-9``.
    """
    a = np.array(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if hermiticity_error(a) > 1e-9:
        raise NotHermitian(f"matrix deviates from Hermitian by {hermiticity_error(a):.3e}")
    a = 0.5 * (a + a.conj().T)
    n = a.shape[0]
    v = np.eye(n, dtype=complex)
    off_mask = ~np.eye(n, dtype=bool)
    threshold = tol * max(1.0, float(np.linalg.norm(a)))

    for _ in range(max_sweeps):
        off = float(np.linalg.norm(a[off_mask]))
        if off < threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = abs(apq)
                if mag < 1e-300:
                    continue
                phase = apq / mag
                tau = (a[q, q].real - a[p, p].real) / (2.0 * mag)
                if abs(tau) > 1e150:
                    t = 0.5 / tau
                else:
                    t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                rot = np.array([[c, s], [-s * phase.conjugate(), c * phase.conjugate()]])
                cols = [p, q]
                a[:, cols] = a[:, cols] @ rot
                a[cols, :] = rot.conj().T @ a[cols, :]
                v[:, cols] = v[:, cols] @ rot
                a[p, q] = a[q, p] = 0.0
                a[p, p] = a[p, p].real
                a[q, q] = a[q, q].real

    evals = np.real(np.diag(a)).copy()
    order = np.argsort(-evals, kind="stable")
    return SpectralDecomposition(eigenvalues=evals[order], eigenvectors=v[:, order])


def min_eigenvalue(m: np.ndarray) -> float:
    return float(hermitian_eigen(m).eigenvalues[-1])


def hermitian_function(m: np.ndarray, fn) -> np.ndarray:
    """Apply a scalar function to the spectrum of a Hermitian matrix."""
    dec = hermitian_eigen(m)
    v = dec.eigenvectors
    return (v * fn(dec.eigenvalues)) @ v.conj().T


# --------------------------------------------------------------------------
# Bipartite states

Subsystem = Literal["A", "B"]


def _check_valid_density(rho: np.ndarray, what: str = "state") -> None:
    herm = hermiticity_error(rho)
    if herm > HERMITIAN_TOL:
        raise InvalidState(f"{what} is not Hermitian (error {herm:.3e})")
    tr = complex(np.trace(rho))
    if abs(tr - 1.0) > TRACE_TOL:
        raise InvalidState(f"{what} has trace {tr.real:.15g}, expected 1")
    lo = min_eigenvalue(rho)
    if lo < -PSD_TOL:
        raise InvalidState(f"{what} is not positive semidefinite (min eigenvalue {lo:.3e})")


def check_density_matrix(rho: np.ndarray, dim: int | None = None, what: str = "state") -> np.ndarray:
    """Validate a single-party density matrix and return it as a complex array."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionMismatch(f"{what} must be square, got shape {rho.shape}")
    if dim is not None and rho.shape[0] != dim:
        raise DimensionMismatch(f"{what} has dimension {rho.shape[0]}, expected {dim}")
    _check_valid_density(rho, what)
    return rho


@dataclass(frozen=True)
class BipartiteState:
    """Validated density matrix on ``C^dim_a (x) C^dim_b``."""

    rho: np.ndarray = field(repr=False)
    dim_a: int
    dim_b: int

    def __post_init__(self) -> None:
        rho = np.array(self.rho, dtype=complex)
        n = self.dim_a * self.dim_b
        if self.dim_a < 1 or self.dim_b < 1 or rho.shape != (n, n):
            raise DimensionMismatch(
                f"matrix of shape {rho.shape} does not match dims ({self.dim_a}, {self.dim_b})"
            )
        if n > MAX_TOTAL_DIM:
            raise DimensionMismatch(f"total dimension {n} exceeds {MAX_TOTAL_DIM}")
        _check_valid_density(rho)
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @property
    def dims(self) -> tuple[int, int]:
        return (self.dim_a, self.dim_b)

    def expectation(self, op: np.ndarray) -> float:
        return float(np.real(np.trace(self.rho @ op)))

    def marginal(self, keep: Subsystem) -> np.ndarray:
        return partial_trace(self, keep)


def partial_trace_matrix(m: np.ndarray, dims: Sequence[int], keep: Subsystem) -> np.ndarray:
    da, db = dims
    t = np.asarray(m).reshape(da, db, da, db)
    if keep == "A":
        return np.einsum("ibjb->ij", t)
    if keep == "B":
        return np.einsum("aiaj->ij", t)
    raise ValueError(f"keep must be 'A' or 'B', got {keep!r}")


def partial_transpose_matrix(m: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    da, db = dims
    t = np.asarray(m).reshape(da, db, da, db)
    return t.transpose(0, 3, 2, 1).reshape(da * db, da * db)


def partial_trace(s: BipartiteState, keep: Subsystem) -> np.ndarray:
    """Reduced density matrix of the subsystem ``keep``."""
    return partial_trace_matrix(s.rho, s.dims, keep)


def partial_transpose(s: BipartiteState) -> np.ndarray:
    """Transpose on subsystem B."""
    return partial_transpose_matrix(s.rho, s.dims)


def min_eig_partial_transpose(s: BipartiteState) -> float:
    """Smallest eigenvalue of the partial transpose.

    Negative values certify entanglement. For 2x2 and 2x3 systems a
    nonnegative value certifies separability.
    """
    return min_eigenvalue(partial_transpose(s))


def product_state(rho_a: np.ndarray, rho_b: np.ndarray) -> BipartiteState:
    rho_a = np.asarray(rho_a, dtype=complex)
    rho_b = np.asarray(rho_b, dtype=complex)
    return BipartiteState(tensor(rho_a, rho_b), rho_a.shape[0], rho_b.shape[0])


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    a = a.rho if isinstance(a, BipartiteState) else a
    b = b.rho if isinstance(b, BipartiteState) else b
    return 0.5 * float(np.sum(np.abs(hermitian_eigen(np.asarray(a) - np.asarray(b)).eigenvalues)))


# --------------------------------------------------------------------------
# Measurements


@dataclass(frozen=True)
class Povm:
    """Positive operators summing to the identity, with outcome labels."""

    elements: tuple[np.ndarray, ...]
    labels: tuple = ()

    def __post_init__(self) -> None:
        elems = tuple(np.array(e, dtype=complex) for e in self.elements)
        if not elems:
            raise InvalidPovm("a POVM needs at least one element")
        d = elems[0].shape[0]
        for e in elems:
            if e.shape != (d, d):
                raise InvalidPovm("POVM elements must be square and share one dimension")
            if hermiticity_error(e) > 1e-10:
                raise InvalidPovm("POVM element is not Hermitian")
            if min_eigenvalue(e) < -PSD_TOL:
                raise InvalidPovm("POVM element is not positive semidefinite")
        total = sum(elems)
        if np.max(np.abs(total - np.eye(d))) > 1e-9:
            raise InvalidPovm("POVM elements do not sum to the identity")
        labels = tuple(self.labels) if self.labels else tuple(range(len(elems)))
        if len(labels) != len(elems):
            raise InvalidPovm("one label per element required")
        for e in elems:
            e.setflags(write=False)
        object.__setattr__(self, "elements", elems)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.elements[0].shape[0]

    def __len__(self) -> int:
        return len(self.elements)

    def probabilities(self, rho: np.ndarray) -> np.ndarray:
        return np.array([np.real(np.trace(e @ rho)) for e in self.elements])


def dichotomic_povm(observable: np.ndarray) -> Povm:
    """Two-outcome POVM ``{(1 + O)/2, (1 - O)/2}`` labelled ``(+1, -1)``."""
    o = np.asarray(observable, dtype=complex)
    eye = np.eye(o.shape[0])
    return Povm(((eye + o) / 2, (eye - o) / 2), labels=(1, -1))
