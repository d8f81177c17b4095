"""Local filtering and the sequential filter-then-measure experiment."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Literal, Sequence

import numpy as np

from . import bell
from .errors import DimensionMismatch, InvalidParameter, InvalidState, ZeroSuccessProbability
from .montecarlo import run_chunked, sample_categorical
from .qcore import (
    PSD_TOL,
    BipartiteState,
    basis_projector,
    hermitian_eigen,
    hermiticity_error,
    tensor,
)
from .states import StateFamily, singlet_projector, state_q, state_rho_G

DEFAULT_EPS = 1e-4


@dataclass(frozen=True)
class LocalFilter:
    """Positive local operator with norm at most one.

    The failure branch of the instrument is ``sqrt(1 - F^dagger F)``.
    """

    F: np.ndarray = field(repr=False)
    party: Literal["A", "B"] = "A"

    def __post_init__(self) -> None:
        f = np.array(self.F, dtype=complex)
        if f.ndim != 2 or f.shape[0] != f.shape[1]:
            raise DimensionMismatch(f"filter must be square, got shape {f.shape}")
        if hermiticity_error(f) > 1e-12:
            raise InvalidParameter("filter must be Hermitian positive semidefinite")
        evals = hermitian_eigen(f).eigenvalues
        if evals[-1] < -PSD_TOL:
            raise InvalidParameter(f"filter is not positive semidefinite (min eigenvalue {evals[-1]:.3e})")
        if evals[0] > 1 + 1e-12:
            raise InvalidParameter(f"filter norm {evals[0]:.15g} exceeds 1")
        f.setflags(write=False)
        object.__setattr__(self, "F", f)

    @property
    def dim(self) -> int:
        return self.F.shape[0]

    @property
    def success_effect(self) -> np.ndarray:
        return self.F.conj().T @ self.F


@dataclass(frozen=True)
class FilterOutcome:
    filtered: BipartiteState
    success_prob: float


def apply_filters(s: BipartiteState, f_a: LocalFilter, f_b: LocalFilter) -> FilterOutcome:
    """Post-selected state ``(F_A (x) F_B) rho (F_A (x) F_B)^dagger / N``."""
    if (f_a.dim, f_b.dim) != s.dims:
        raise DimensionMismatch(f"filter dims ({f_a.dim}, {f_b.dim}) do not match state {s.dims}")
    k = tensor(f_a.F, f_b.F)
    unnorm = k @ s.rho @ k.conj().T
    n = float(np.real(np.trace(unnorm)))
    if not n > 1e-300:
        raise ZeroSuccessProbability(f"filter success probability {n:.3e} is numerically zero")
    rho = unnorm / n
    rho = 0.5 * (rho + rho.conj().T)
    return FilterOutcome(BipartiteState(rho, *s.dims), n)


def paper_filters(eps: float, q: float) -> tuple[LocalFilter, LocalFilter]:
    """``F_A = eps|0><0| + |1><1|`` and ``F_B = delta|0><0| + |1><1|``, ``delta = eps/sqrt(q)``."""
    if not 0 < eps <= 1 or not 0 < q <= 1:
        raise InvalidParameter(f"need 0 < eps <= 1 and 0 < q <= 1, got eps={eps}, q={q}")
    delta = eps / np.sqrt(q)
    if delta > 1 + 1e-15:
        raise InvalidParameter(f"delta = eps/sqrt(q) = {delta:.6g} exceeds 1")
    delta = min(delta, 1.0)
    p0, p1 = basis_projector(0, 2), basis_projector(1, 2)
    return LocalFilter(eps * p0 + p1, "A"), LocalFilter(delta * p0 + p1, "B")


def qubit_subspace_filter(d: int, party: Literal["A", "B"] = "A") -> LocalFilter:
    """Projector onto span{|0>, |1>} in ``C^d``."""
    if d < 3:
        raise InvalidParameter(f"qubit_subspace_filter needs d >= 3, got {d}")
    f = np.zeros((d, d), dtype=complex)
    f[0, 0] = f[1, 1] = 1.0
    return LocalFilter(f, party)


def restrict_to_qubits(s: BipartiteState, tol: float = 1e-12) -> BipartiteState:
    """Drop unpopulated levels above |1> on both sides.

    The state must have no weight outside the qubit (x) qubit block.
    """
    if s.dims == (2, 2):
        return s
    da, db = s.dims
    idx = [a * db + b for a in range(2) for b in range(2)]
    block = s.rho[np.ix_(idx, idx)]
    outside = 1.0 - float(np.real(np.trace(block)))
    if outside > tol:
        raise InvalidState(f"state has weight {outside:.3e} outside the qubit block")
    return BipartiteState(block / np.real(np.trace(block)), 2, 2)


def project_to_qubits(s: BipartiteState) -> FilterOutcome:
    """Filter both sides onto span{|0>, |1>} and return the 2x2 restriction."""
    out = apply_filters(s, qubit_subspace_filter(s.dim_a, "A"), qubit_subspace_filter(s.dim_b, "B"))
    return FilterOutcome(restrict_to_qubits(out.filtered), out.success_prob)


def filtered_limit_state(p: float) -> BipartiteState:
    """``p Psi- + (1 - p)(|01><01| + |10><10|)/2``, the small-eps limit of the filtered states."""
    mix = (basis_projector(1, 4) + basis_projector(2, 4)) / 2
    return BipartiteState(p * singlet_projector() + (1 - p) * mix, 2, 2)


@dataclass(frozen=True)
class ScanRow:
    eps: float
    S: float
    N: float
    S_richardson: float | None


def filter_scan(family: StateFamily | str, q: float, eps_list: Sequence[float]) -> list[ScanRow]:
    """Horodecki value and success probability of the filtered state for each ``eps``.

    ``S_richardson`` extrapolates each row with the next-larger ``eps`` to
    ``eps -> 0`` assuming an ``eps^2`` correction; it is informational only.
    """
    tag = family.tag if isinstance(family, StateFamily) else family
    builders = {"state_q": state_q, "rho_G": state_rho_G}
    if tag not in builders:
        raise InvalidParameter(f"filter_scan supports state_q and rho_G, got {tag!r}")
    s = builders[tag](q)
    raw = []
    for eps in eps_list:
        out = apply_filters(s, *paper_filters(float(eps), q))
        raw.append((float(eps), bell.horodecki_S(out.filtered), out.success_prob))
    rows = []
    by_eps = sorted(raw)
    for eps, S, n in raw:
        larger = [r for r in by_eps if r[0] > eps]
        extrap = None
        if larger:
            e2, s2, _ = larger[0]
            extrap = (e2**2 * S - eps**2 * s2) / (e2**2 - eps**2)
        rows.append(ScanRow(eps, S, n, extrap))
    return rows


# --------------------------------------------------------------------------
# Sequential Monte Carlo


@dataclass
class SequentialReport:
    seed: int
    rounds: int
    successes: int
    success_rate: float
    success_prob: float
    success_z: float
    settings: dict
    counts: list  # per CHSH pair: 2x2 counts, outcome order (+1, -1)
    correlators: list
    correlator_targets: list
    S_hat: float
    S_sigma: float
    S_target: float
    S_z: float

    def to_dict(self) -> dict:
        return asdict(self)


def sequential_mc(
    s: BipartiteState,
    f_a: LocalFilter,
    f_b: LocalFilter,
    settings: bell.ChshSettings | None = None,
    rounds: int = 1_000_000,
    seed: int = 0,
    workers: int = 1,
) -> SequentialReport:
    """Sample the filter instruments, keep the rounds where both succeed, then
    pick one of the four CHSH setting pairs uniformly and sample outcomes.

    When ``settings`` is None the optimal settings of the filtered state are used.
    """
    if rounds < 1:
        raise InvalidParameter("rounds must be >= 1")
    if (f_a.dim, f_b.dim) != s.dims:
        raise DimensionMismatch(f"filter dims ({f_a.dim}, {f_b.dim}) do not match state {s.dims}")
    eye_a, eye_b = np.eye(f_a.dim), np.eye(f_b.dim)
    effects_a = (f_a.success_effect, eye_a - f_a.success_effect)
    effects_b = (f_b.success_effect, eye_b - f_b.success_effect)
    # filter outcome index 0 = both succeed
    filter_probs = np.array(
        [np.real(np.trace(tensor(ea, eb) @ s.rho)) for ea in effects_a for eb in effects_b]
    )
    outcome = apply_filters(s, f_a, f_b)
    post = restrict_to_qubits(outcome.filtered)
    if settings is None:
        settings = bell.optimal_chsh_settings(post)
    pair_probs = [
        bell.born_joint(post, bell.projectors_from_bloch(a), bell.projectors_from_bloch(b)).probs.ravel()
        for a, b in settings.pairs()
    ]

    def chunk(n: int, rng: np.random.Generator) -> np.ndarray:
        counts = np.zeros((4, 4), dtype=np.int64)
        kept = int(np.count_nonzero(sample_categorical(filter_probs, n, rng) == 0))
        which = rng.integers(0, 4, size=kept)
        for k in range(4):
            m = int(np.count_nonzero(which == k))
            if m:
                counts[k] += np.bincount(sample_categorical(pair_probs[k], m, rng), minlength=4)
        return counts

    counts = run_chunked(chunk, rounds, seed, stream=0, workers=workers)
    successes = int(counts.sum())
    if successes == 0:
        raise ZeroSuccessProbability(f"no round out of {rounds} passed both filters")
    n_sp = outcome.success_prob
    rate = successes / rounds
    rate_sigma = np.sqrt(max(n_sp * (1 - n_sp), 1.0 / rounds) / rounds)

    signs = np.array([1, -1, -1, 1])  # ab for (+,+), (+,-), (-,+), (-,-)
    corr, targets, var = [], [], 0.0
    for k in range(4):
        nk = int(counts[k].sum())
        e = float(signs @ counts[k]) / nk if nk else 0.0
        t = float(signs @ pair_probs[k])
        corr.append(e)
        targets.append(t)
        var += (1 - t * t) / max(nk, 1)
    s_hat = float(np.dot(bell.CHSH_SIGNS, corr))
    s_target = float(np.dot(bell.CHSH_SIGNS, targets))
    s_sigma = float(np.sqrt(var))
    return SequentialReport(
        seed=int(seed),
        rounds=int(rounds),
        successes=successes,
        success_rate=rate,
        success_prob=n_sp,
        success_z=float(abs(rate - n_sp) / rate_sigma),
        settings=settings.to_dict(),
        counts=counts.reshape(4, 2, 2).tolist(),
        correlators=corr,
        correlator_targets=targets,
        S_hat=s_hat,
        S_sigma=s_sigma,
        S_target=s_target,
        S_z=float(abs(s_hat - s_target) / s_sigma) if s_sigma > 0 else 0.0,
    )
