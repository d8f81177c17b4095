"""Born-rule statistics, CHSH values and the Horodecki criterion for two qubits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonUnitVector
from .qcore import PAULIS, BipartiteState, Povm, hermitian_eigen, tensor

UNIT_TOL = 1e-12


def as_unit_vector(x, *, tol: float = UNIT_TOL) -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(3)
    if abs(np.linalg.norm(v) - 1.0) > tol:
        raise NonUnitVector(f"Bloch vector {v} has norm {np.linalg.norm(v):.15g}")
    return v


def bloch_operator(x) -> np.ndarray:
    """``x . sigma`` for a real 3-vector ``x``."""
    x = np.asarray(x, dtype=float)
    return x[0] * PAULIS[0] + x[1] * PAULIS[1] + x[2] * PAULIS[2]


def projectors_from_bloch(x) -> Povm:
    """Projective qubit measurement ``{(1 + x.sigma)/2, (1 - x.sigma)/2}``, outcomes (+1, -1)."""
    op = bloch_operator(as_unit_vector(x))
    eye = np.eye(2)
    return Povm(((eye + op) / 2, (eye - op) / 2), labels=(1, -1))


@dataclass(frozen=True)
class JointDistribution:
    labels_a: tuple
    labels_b: tuple
    probs: np.ndarray  # probs[i, j] = p(labels_a[i], labels_b[j])

    def marginal_a(self) -> np.ndarray:
        return self.probs.sum(axis=1)

    def marginal_b(self) -> np.ndarray:
        return self.probs.sum(axis=0)

    def correlator(self) -> float:
        """``sum a b p(ab)``; labels must be numeric."""
        a = np.asarray(self.labels_a, dtype=float)
        b = np.asarray(self.labels_b, dtype=float)
        return float(a @ self.probs @ b)


def born_joint(s: BipartiteState, povm_a: Povm, povm_b: Povm) -> JointDistribution:
    """``p(ab) = Tr(M_a (x) M_b rho)``."""
    if povm_a.dim != s.dim_a or povm_b.dim != s.dim_b:
        raise DimensionMismatch(
            f"POVM dimensions ({povm_a.dim}, {povm_b.dim}) do not match state dims {s.dims}"
        )
    da, db = s.dims
    rho = s.rho.reshape(da, db, da, db)
    ma = np.stack(povm_a.elements)
    mb = np.stack(povm_b.elements)
    # Tr[(M_a (x) M_b) rho] = sum M_a[i,k] M_b[j,l] rho[k,l,i,j]
    probs = np.real(np.einsum("aik,bjl,klij->ab", ma, mb, rho))
    return JointDistribution(povm_a.labels, povm_b.labels, probs)


def _require_two_qubits(s: BipartiteState) -> None:
    if s.dims != (2, 2):
        raise DimensionMismatch(
            f"CHSH machinery needs a two-qubit state, got dims {s.dims}; "
            "filter or project onto the qubit block first"
        )


def correlator(s: BipartiteState, x, y) -> float:
    """``E = sum_ab ab p(ab|xy)`` for projective measurements along ``x`` and ``y``."""
    _require_two_qubits(s)
    return born_joint(s, projectors_from_bloch(x), projectors_from_bloch(y)).correlator()


def correlation_matrix(s: BipartiteState) -> np.ndarray:
    """``T_ij = Tr(rho sigma_i (x) sigma_j)``; row index belongs to Alice."""
    _require_two_qubits(s)
    t = np.empty((3, 3))
    for i, si in enumerate(PAULIS):
        for j, sj in enumerate(PAULIS):
            t[i, j] = np.real(np.trace(s.rho @ tensor(si, sj)))
    return t


def _principal_axes(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    dec = hermitian_eigen(t.T @ t)
    evals = np.clip(dec.eigenvalues, 0.0, None)
    return evals, np.real(dec.eigenvectors)


def horodecki_S(s: BipartiteState) -> float:
    """Largest CHSH value over projective settings: ``2 sqrt(t1 + t2)``."""
    evals, _ = _principal_axes(correlation_matrix(s))
    return float(2.0 * np.sqrt(evals[0] + evals[1]))


@dataclass(frozen=True)
class ChshSettings:
    a1: np.ndarray
    a2: np.ndarray
    b1: np.ndarray
    b2: np.ndarray

    def __post_init__(self) -> None:
        for name in ("a1", "a2", "b1", "b2"):
            object.__setattr__(self, name, as_unit_vector(getattr(self, name), tol=1e-9))

    def pairs(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Setting pairs in the order of the CHSH sum E11 + E12 + E21 - E22."""
        return [(self.a1, self.b1), (self.a1, self.b2), (self.a2, self.b1), (self.a2, self.b2)]

    def to_dict(self) -> dict:
        return {k: [float(c) for c in getattr(self, k)] for k in ("a1", "a2", "b1", "b2")}


CHSH_SIGNS = (1.0, 1.0, 1.0, -1.0)


def canonical_settings() -> ChshSettings:
    """Tsirelson-saturating settings for the correlation ``+x.y``."""
    z = np.array([0.0, 0.0, 1.0])
    x = np.array([1.0, 0.0, 0.0])
    return ChshSettings(z, x, (z + x) / np.sqrt(2), (z - x) / np.sqrt(2))


def chsh_value(s: BipartiteState, c: ChshSettings) -> float:
    _require_two_qubits(s)
    return float(sum(sign * correlator(s, a, b) for sign, (a, b) in zip(CHSH_SIGNS, c.pairs())))


def _orthogonal_unit(v: np.ndarray) -> np.ndarray:
    axis = np.eye(3)[int(np.argmin(np.abs(v)))]
    w = axis - (axis @ v) * v
    return w / np.linalg.norm(w)


def optimal_chsh_settings(s: BipartiteState) -> ChshSettings:
    """Settings attaining :func:`horodecki_S`.

    Bob measures ``cos(theta) v1 +- sin(theta) v2`` with ``v1, v2`` the top
    eigenvectors of ``T^T T`` and ``tan(theta) = sqrt(t2 / t1)``; Alice
    measures along ``T v1`` and ``T v2``. A state with no correlations
    (``t1 < 1e-12``) gets the canonical settings.
    """
    t = correlation_matrix(s)
    evals, vecs = _principal_axes(t)
    if evals[0] < 1e-12:
        return canonical_settings()
    v1, v2 = vecs[:, 0], vecs[:, 1]
    theta = np.arctan2(np.sqrt(evals[1]), np.sqrt(evals[0]))
    b1 = np.cos(theta) * v1 + np.sin(theta) * v2
    b2 = np.cos(theta) * v1 - np.sin(theta) * v2
    a1 = t @ v1
    a1 /= np.linalg.norm(a1)
    tv2 = t @ v2
    a2 = tv2 / np.linalg.norm(tv2) if np.linalg.norm(tv2) > 1e-12 else _orthogonal_unit(a1)
    return ChshSettings(a1, a2, b1 / np.linalg.norm(b1), b2 / np.linalg.norm(b2))
