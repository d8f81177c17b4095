"""Executable local hidden variable models.

Every model shares a hidden unit vector ``lam`` (plus, for ``q < 1/2``, a
shared coin choosing between the ``q = 1/2`` model and a product model).
Each party's response is computed by a function that sees only its own
setting, the shared variables and its own private uniforms, so locality is
enforced by the call signatures.

Response rule for a party holding a Hermitian observable ``O`` with
spectrum in [-1, 1], written on the qubit block as ``c0 x.sigma + c1 1``:

* Alice accepts ``lam`` with probability ``|x.lam|``. Accepted: output
  ``-sign(x.lam)`` with probability ``c0``, otherwise a +-1 coin with mean
  ``c1 / (1 - c0)``. Rejected: a coin with mean ``<f|O|f>`` where ``|f>`` is
  the level Alice's noise sits in (``|0>`` for ``state_q``, ``|2>`` for the
  erasure state).
* Bob outputs ``sign(x.lam)`` with probability ``c0``, otherwise a coin with
  mean ``c1 / (1 - c0)``.

For qubit observables ``x.sigma`` (``c0 = 1, c1 = 0``) this is exactly the
singlet-plus-noise model; for the erasure state it reproduces
``<ab> = [-c0A c0B xA.xB + c1A c1B + trR_A c1B] / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import bell
from .errors import InvalidParameter, InvalidPovm, NotDichotomic, NotHermitian
from .montecarlo import chunk_rng, run_chunked, sample_categorical
from .qcore import (
    PAULIS,
    BipartiteState,
    Povm,
    basis_projector,
    dichotomic_povm,
    hermitian_eigen,
    hermitian_function,
    hermiticity_error,
    projector,
)
from .stateio import matrix_to_pairs, pairs_to_matrix
from .states import erasure_state, state_q, state_rho_G, state_rho_GM

Z_AXIS = np.array([0.0, 0.0, 1.0])
Z_THRESHOLD = 5.0
MODELS = ("protocol1", "erasure", "protocol2-rhoG", "protocol2-rhoGM")


# --------------------------------------------------------------------------
# Hidden variable


def sample_sphere_batch(n: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal((n, 3))
    norms = np.linalg.norm(v, axis=1)
    bad = norms == 0.0
    while np.any(bad):
        v[bad] = rng.standard_normal((int(bad.sum()), 3))
        norms = np.linalg.norm(v, axis=1)
        bad = norms == 0.0
    return v / norms[:, None]


def sample_sphere(rng: np.random.Generator) -> np.ndarray:
    """One unit vector drawn uniformly from the sphere."""
    return sample_sphere_batch(1, rng)[0]


def _sign(t: np.ndarray) -> np.ndarray:
    return np.where(t >= 0, 1, -1)


def _coin(mean: np.ndarray, u: np.ndarray) -> np.ndarray:
    """+-1 variable with the given mean, driven by uniforms ``u``."""
    return np.where(u < (1 + mean) / 2, 1, -1)


# --------------------------------------------------------------------------
# Observable decomposition


@dataclass(frozen=True)
class ObservableDecomposition:
    c0: float
    c1: float
    x: np.ndarray
    trR: float

    def qubit_block(self) -> np.ndarray:
        return self.c0 * bell.bloch_operator(self.x) + self.c1 * np.eye(2)


def _block_coefficients(o: np.ndarray) -> tuple[float, float, np.ndarray]:
    block = o[:2, :2]
    c1 = float(np.real(np.trace(block))) / 2
    v = np.array([np.real(np.trace(block @ s)) / 2 for s in PAULIS])
    c0 = float(np.linalg.norm(v))
    x = v / c0 if c0 >= 1e-12 else Z_AXIS.copy()
    return c0, c1, x


def _check_observable(o: np.ndarray, strict: bool) -> np.ndarray:
    o = np.asarray(o, dtype=complex)
    if hermiticity_error(o) > 1e-9:
        raise NotHermitian("observable is not Hermitian")
    if strict:
        if np.max(np.abs(o @ o - np.eye(o.shape[0]))) > 1e-9:
            raise NotDichotomic("observable does not square to the identity")
    else:
        evals = hermitian_eigen(o).eigenvalues
        if evals[0] > 1 + 1e-9 or evals[-1] < -1 - 1e-9:
            raise NotDichotomic("observable spectrum leaves [-1, 1]")
    return o


def decompose_observable(o: np.ndarray, d: int = 3, *, strict: bool = True) -> ObservableDecomposition:
    """Write a qutrit observable's qubit block as ``c0 x.sigma + c1 1`` and
    return ``trR = <2|O|2>``.

    ``strict`` requires ``O^2 = 1``; otherwise any Hermitian ``O`` with
    spectrum in [-1, 1] is accepted.
    """
    if d != 3 or np.shape(o) != (3, 3):
        raise InvalidParameter(f"decompose_observable expects a 3x3 observable, got shape {np.shape(o)}")
    o = _check_observable(o, strict)
    c0, c1, x = _block_coefficients(o)
    return ObservableDecomposition(c0, c1, x, float(np.real(o[2, 2])))


def qubit_observable_embedded(y, d: int = 3, top: float = 1.0) -> np.ndarray:
    """``y.sigma`` on span{|0>, |1>} with eigenvalue ``top`` on the remaining levels."""
    o = np.eye(d, dtype=complex) * top
    o[:2, :2] = bell.bloch_operator(bell.as_unit_vector(y))
    return o


# --------------------------------------------------------------------------
# Response functions


@dataclass(frozen=True)
class ResponseParams:
    """Per-round response parameters; every field has leading length ``n`` (or broadcasts)."""

    x: np.ndarray  # (n, 3)
    c0: np.ndarray
    c1: np.ndarray
    flag_bias: np.ndarray

    @classmethod
    def stack(cls, items: Sequence["ResponseParams"]) -> "ResponseParams":
        return cls(
            np.array([p.x for p in items]).reshape(-1, 3),
            np.array([p.c0 for p in items], dtype=float).reshape(-1),
            np.array([p.c1 for p in items], dtype=float).reshape(-1),
            np.array([p.flag_bias for p in items], dtype=float).reshape(-1),
        )

    def take(self, idx: np.ndarray) -> "ResponseParams":
        return ResponseParams(self.x[idx], self.c0[idx], self.c1[idx], self.flag_bias[idx])


def _residual_mean(c0: np.ndarray, c1: np.ndarray) -> np.ndarray:
    rest = 1.0 - c0
    safe = np.where(rest > 1e-12, rest, 1.0)
    return np.clip(np.where(rest > 1e-12, c1 / safe, 0.0), -1.0, 1.0)


def alice_response(
    p: ResponseParams, lam: np.ndarray, core: np.ndarray, u: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Alice's outputs and acceptance flags; ``u`` holds three private uniforms per round."""
    dot = np.einsum("ij,ij->i", np.broadcast_to(p.x, lam.shape), lam)
    accepted = core & (u[:, 0] < np.abs(dot))
    on_accept = np.where(u[:, 1] < p.c0, -_sign(dot), _coin(_residual_mean(p.c0, p.c1), u[:, 2]))
    on_reject = _coin(np.broadcast_to(p.flag_bias, dot.shape), u[:, 2])
    return np.where(accepted, on_accept, on_reject), accepted


def bob_response(p: ResponseParams, lam: np.ndarray, core: np.ndarray, u: np.ndarray) -> np.ndarray:
    dot = np.einsum("ij,ij->i", np.broadcast_to(p.x, lam.shape), lam)
    in_core = np.where(u[:, 0] < p.c0, _sign(dot), _coin(_residual_mean(p.c0, p.c1), u[:, 1]))
    product = _coin(np.broadcast_to(p.c1, dot.shape), u[:, 1])
    return np.where(core, in_core, product)


@dataclass(frozen=True)
class RoundBatch:
    a: np.ndarray
    b: np.ndarray
    accepted: np.ndarray
    core: np.ndarray
    lam: np.ndarray


def _check_model_q(q: float) -> float:
    q = float(q)
    if not 0.0 <= q <= 0.5:
        raise InvalidParameter(f"the local model is only valid for 0 <= q <= 1/2, got q={q}")
    return q


def _shared_variables(n: int, q: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    lam = sample_sphere_batch(n, rng)
    core = rng.random(n) < 2 * q if q < 0.5 else np.ones(n, dtype=bool)
    return lam, core


def _run_pair(pa: ResponseParams, pb: ResponseParams, q: float, n: int, rng: np.random.Generator) -> RoundBatch:
    lam, core = _shared_variables(n, q, rng)
    ua = rng.random((n, 3))
    ub = rng.random((n, 2))
    a, accepted = alice_response(pa, lam, core, ua)
    b = bob_response(pb, lam, core, ub)
    return RoundBatch(a, b, accepted, core, lam)


def _qubit_params(x) -> ResponseParams:
    x = bell.as_unit_vector(x)
    return ResponseParams(x, np.array(1.0), np.array(0.0), np.array(x[2]))


def protocol1_batch(x, y, q: float, n: int, rng: np.random.Generator) -> RoundBatch:
    """``n`` rounds of the projective-measurement model for ``state_q(q)``.

    Alice's rejection coin has mean ``<0|x.sigma|0> = x_z``; Bob outputs
    ``sign(y.lam)``. Rounds outside the ``q = 1/2`` core (probability
    ``1 - 2q``) use product responses.
    """
    q = _check_model_q(q)
    return _run_pair(_qubit_params(x), _qubit_params(y), q, n, rng)


def protocol1_round(x, y, q: float, rng: np.random.Generator) -> tuple[int, int, bool]:
    r = protocol1_batch(x, y, q, 1, rng)
    return int(r.a[0]), int(r.b[0]), bool(r.accepted[0])


def _decomp_params(dec: ObservableDecomposition) -> ResponseParams:
    return ResponseParams(np.asarray(dec.x, float), np.array(dec.c0), np.array(dec.c1), np.array(dec.trR))


def erasure_batch(
    dec_a: ObservableDecomposition, dec_b: ObservableDecomposition, q: float, n: int, rng: np.random.Generator
) -> RoundBatch:
    q = _check_model_q(q)
    return _run_pair(_decomp_params(dec_a), _decomp_params(dec_b), q, n, rng)


def erasure_round(
    dec_a: ObservableDecomposition, dec_b: ObservableDecomposition, q: float, rng: np.random.Generator
) -> tuple[int, int]:
    """One round of the dichotomic model for ``erasure_state(q)``; ``dec_b.trR`` is unused."""
    r = erasure_batch(dec_a, dec_b, q, 1, rng)
    return int(r.a[0]), int(r.b[0])


# --------------------------------------------------------------------------
# Dichotomic base models


@dataclass(frozen=True)
class DichotomicModel:
    """Handle for a shared-``lam`` model of dichotomic projective measurements.

    ``flag`` is the level of Alice's noise component.
    """

    name: str
    q: float
    dim: int
    flag: int

    def __post_init__(self) -> None:
        _check_model_q(self.q)

    def params(self, o: np.ndarray) -> ResponseParams:
        o = _check_observable(np.asarray(o, dtype=complex), strict=False)
        if o.shape != (self.dim, self.dim):
            raise InvalidParameter(f"{self.name} model expects {self.dim}x{self.dim} observables")
        c0, c1, x = _block_coefficients(o)
        return ResponseParams(x, np.array(c0), np.array(c1), np.array(float(np.real(o[self.flag, self.flag]))))

    def state(self) -> BipartiteState:
        return state_q(self.q) if self.name == "protocol1" else erasure_state(self.q)

    def batch(self, o_a: np.ndarray, o_b: np.ndarray, n: int, rng: np.random.Generator) -> RoundBatch:
        return _run_pair(self.params(o_a), self.params(o_b), self.q, n, rng)


def protocol1_model(q: float = 0.5) -> DichotomicModel:
    return DichotomicModel("protocol1", q, 2, 0)


def erasure_model(q: float = 0.5) -> DichotomicModel:
    return DichotomicModel("erasure", q, 3, 2)


# --------------------------------------------------------------------------
# POVM refinement and the rank-one simulation


@dataclass(frozen=True)
class WeightedProjector:
    weight: float
    P: np.ndarray = field(repr=False)
    parent: int  # index of the originating POVM element
    label: Any = None


def refine_povm(p: Povm) -> list[WeightedProjector]:
    """Split each POVM element into weighted rank-one projectors.

    Eigenvalues below 1e-12 are dropped; the total weight is rescaled to
    exactly ``d``.
    """
    d = p.dim
    out: list[WeightedProjector] = []
    for k, elem in enumerate(p.elements):
        dec = hermitian_eigen(elem)
        for val, vec in zip(dec.eigenvalues, dec.eigenvectors.T):
            if val > 1e-12:
                out.append(WeightedProjector(float(val), projector(vec), k, p.labels[k]))
    total = sum(w.weight for w in out)
    if abs(total - d) > 1e-9:
        raise InvalidPovm(f"refined weights sum to {total:.15g}, expected {d}")
    return [WeightedProjector(w.weight * d / total, w.P, w.parent, w.label) for w in out]


def coarse_grain(refined: Sequence[WeightedProjector], n_outcomes: int) -> list[np.ndarray]:
    """Reassemble POVM elements from a refinement."""
    d = refined[0].P.shape[0]
    elems = [np.zeros((d, d), dtype=complex) for _ in range(n_outcomes)]
    for w in refined:
        elems[w.parent] += w.weight * w.P
    return elems


@dataclass
class _Side:
    choose: np.ndarray  # selection probabilities alpha / d
    params: ResponseParams  # one row per refined projector
    parent: np.ndarray
    fallback: np.ndarray  # Tr(M_a sigma)


class Protocol2Simulator:
    """Rank-one POVM simulation on top of a dichotomic base model.

    Per party: (i) pick a refined projector ``P`` with probability
    ``alpha / d``; (ii) run the base model for ``{P, 1 - P}`` with the shared
    hidden variable; (iii) if the ``P`` branch is simulated, output the
    parent outcome; (iv) otherwise output ``a`` with probability
    ``Tr(M_a sigma)``.
    """

    def __init__(
        self,
        povm_a: Povm,
        povm_b: Povm,
        base: DichotomicModel,
        sigma_a: np.ndarray,
        sigma_b: np.ndarray,
    ) -> None:
        for povm in (povm_a, povm_b):
            if povm.dim != base.dim:
                raise InvalidPovm(f"POVM dimension {povm.dim} does not match base model dimension {base.dim}")
        self.povm_a, self.povm_b, self.base = povm_a, povm_b, base
        self.side_a = self._side(povm_a, sigma_a)
        self.side_b = self._side(povm_b, sigma_b)

    def _side(self, povm: Povm, sigma: np.ndarray) -> _Side:
        d = self.base.dim
        refined = refine_povm(povm)
        eye = np.eye(d)
        params = ResponseParams.stack([self.base.params(2 * w.P - eye) for w in refined])
        return _Side(
            choose=np.array([w.weight / d for w in refined]),
            params=params,
            parent=np.array([w.parent for w in refined]),
            fallback=povm.probabilities(np.asarray(sigma, dtype=complex)),
        )

    @staticmethod
    def _finish(side: _Side, idx: np.ndarray, hit: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        out = side.parent[idx].copy()
        miss = ~hit
        out[miss] = sample_categorical(side.fallback, int(miss.sum()), rng)
        return out

    def batch(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Return outcome indices and step-(iii) flags for Alice and Bob."""
        lam, core = _shared_variables(n, self.base.q, rng)
        idx_a = sample_categorical(self.side_a.choose, n, rng)
        idx_b = sample_categorical(self.side_b.choose, n, rng)
        a_dich, _ = alice_response(self.side_a.params.take(idx_a), lam, core, rng.random((n, 3)))
        b_dich = bob_response(self.side_b.params.take(idx_b), lam, core, rng.random((n, 2)))
        hit_a, hit_b = a_dich == 1, b_dich == 1
        return (
            self._finish(self.side_a, idx_a, hit_a, rng),
            self._finish(self.side_b, idx_b, hit_b, rng),
            hit_a,
            hit_b,
        )


def protocol2_round(
    povm_a: Povm,
    povm_b: Povm,
    base: DichotomicModel,
    sigma_a: np.ndarray,
    sigma_b: np.ndarray,
    rng: np.random.Generator,
) -> tuple[Any, Any, str, str]:
    """One round; returns the two outcome labels and the step each party output in."""
    sim = Protocol2Simulator(povm_a, povm_b, base, sigma_a, sigma_b)
    a, b, ha, hb = sim.batch(1, rng)
    stage = lambda hit: "iii" if hit else "iv"  # noqa: E731
    return povm_a.labels[int(a[0])], povm_b.labels[int(b[0])], stage(ha[0]), stage(hb[0])


# --------------------------------------------------------------------------
# Quadrature


def sphere_quadrature_correlator(x, y, n_theta: int = 48, n_phi: int = 64) -> float:
    """``-(1/2pi) * integral |x.lam| sign(x.lam) sign(y.lam) dlam`` over the sphere.

    Polar coordinates are taken about ``y`` so the jump of ``sign(y.lam)``
    falls on ``theta = pi/2``; each hemisphere gets Gauss-Legendre nodes in
    ``theta`` and the periodic ``phi`` direction uses the trapezoid rule.
    """
    x = bell.as_unit_vector(x, tol=1e-9)
    y = bell.as_unit_vector(y, tol=1e-9)
    e1 = np.cross(y, np.eye(3)[int(np.argmin(np.abs(y)))])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(y, e1)
    nodes, weights = np.polynomial.legendre.leggauss(n_theta)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    total = 0.0
    for lo, hi in ((0.0, np.pi / 2), (np.pi / 2, np.pi)):
        theta = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
        w_theta = 0.5 * (hi - lo) * weights * np.sin(theta)
        st, ct = np.sin(theta)[:, None], np.cos(theta)[:, None]
        lam = (
            st[..., None] * np.cos(phi)[None, :, None] * e1
            + st[..., None] * np.sin(phi)[None, :, None] * e2
            + ct[..., None] * np.ones_like(phi)[None, :, None] * y
        )
        dx = lam @ x
        dy = lam @ y
        f = np.abs(dx) * np.sign(dx) * np.sign(dy)
        total += float(w_theta @ f.sum(axis=1)) * (2 * np.pi / n_phi)
    return -total / (2 * np.pi)


# --------------------------------------------------------------------------
# Random settings


def random_unit_vector(rng: np.random.Generator) -> np.ndarray:
    return sample_sphere(rng)


def random_projector(d: int, rank: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    qmat, _ = np.linalg.qr(g)
    return qmat @ qmat.conj().T


def random_dichotomic_observable(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """``2P - 1`` for a random projector ``P`` (rank random in 1..d-1 unless given)."""
    rank = int(rng.integers(1, d)) if rank is None else rank
    return 2 * random_projector(d, rank, rng) - np.eye(d)


def random_povm(d: int, n_outcomes: int, rng: np.random.Generator, max_rank: int = 1) -> Povm:
    """Random POVM ``M_k = S^{-1/2} G_k S^{-1/2}`` from Ginibre seeds ``G_k``."""
    if n_outcomes * max_rank < d:
        raise InvalidParameter(f"{n_outcomes} outcomes of rank <= {max_rank} cannot span C^{d}")
    ranks = [int(r) for r in rng.integers(1, max_rank + 1, size=n_outcomes)]
    i = 0
    while sum(ranks) < d:
        ranks[i] = min(ranks[i] + 1, max_rank)
        i = (i + 1) % n_outcomes
    seeds = []
    for r in ranks:
        w = rng.standard_normal((d, r)) + 1j * rng.standard_normal((d, r))
        seeds.append(w @ w.conj().T)
    inv_sqrt = hermitian_function(sum(seeds), lambda ev: 1.0 / np.sqrt(ev))
    elems = []
    for g in seeds:
        m = inv_sqrt @ g @ inv_sqrt
        elems.append(0.5 * (m + m.conj().T))
    # absorb rounding so the elements sum to the identity exactly enough
    elems[-1] = elems[-1] + (np.eye(d) - sum(elems))
    return Povm(tuple(elems))


def random_settings(model: str, k: int, rng: np.random.Generator) -> list:
    """``k`` random setting pairs suitable for ``model``."""
    out: list = []
    for i in range(k):
        if model == "protocol1":
            out.append((random_unit_vector(rng), random_unit_vector(rng)))
        elif model == "erasure":
            o_a = random_dichotomic_observable(3, rng)
            if i % 2 == 0:
                o_b = qubit_observable_embedded(random_unit_vector(rng), 3, top=1.0)
            else:
                o_b = random_dichotomic_observable(3, rng, rank=1)
            out.append((o_a, o_b))
        elif model == "protocol2-rhoG":
            out.append(tuple(random_povm(2, int(rng.integers(2, 5)), rng) for _ in range(2)))
        elif model == "protocol2-rhoGM":
            out.append(tuple(random_povm(3, int(rng.integers(2, 5)), rng, max_rank=2) for _ in range(2)))
        else:
            raise InvalidParameter(f"unknown model {model!r}; expected one of {MODELS}")
    return out


# --------------------------------------------------------------------------
# Experiment harness


def setting_to_json(model: str, setting) -> dict:
    a, b = setting
    if model == "protocol1":
        return {"x": [float(c) for c in a], "y": [float(c) for c in b]}
    if model == "erasure":
        return {"A": matrix_to_pairs(a), "B": matrix_to_pairs(b)}
    return {"A": [matrix_to_pairs(e) for e in a.elements], "B": [matrix_to_pairs(e) for e in b.elements]}


def setting_from_json(model: str, obj: dict):
    if model == "protocol1":
        return (bell.as_unit_vector(obj["x"], tol=1e-9), bell.as_unit_vector(obj["y"], tol=1e-9))
    if model == "erasure":
        return (pairs_to_matrix(obj["A"], 3), pairs_to_matrix(obj["B"], 3))
    d = 2 if model == "protocol2-rhoG" else 3
    return tuple(Povm(tuple(pairs_to_matrix(e, d) for e in obj[side])) for side in ("A", "B"))


@dataclass
class SimulationReport:
    """Empirical statistics of an LHV model against Born-rule targets."""

    model: str
    q: float
    seed: int
    rounds: int
    settings: list
    empirical: list  # per setting: probability table
    target: list
    z: list  # per setting: z-score table
    correlators: list  # dichotomic models only: {ab, a, b} empirical/target/z
    max_abs_dev: float
    max_z: float
    rates: dict

    @property
    def passed(self) -> bool:
        return self.max_z <= Z_THRESHOLD

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "q": self.q,
            "seed": self.seed,
            "rounds": self.rounds,
            "settings": self.settings,
            "empirical": self.empirical,
            "target": self.target,
            "z": self.z,
            "correlators": self.correlators,
            "max_abs_dev": self.max_abs_dev,
            "max_z": self.max_z,
            "rates": self.rates,
        }


def _z(observed: np.ndarray, expected: np.ndarray, var_per_round: np.ndarray, n: int) -> np.ndarray:
    # floor the variance at one-count resolution so that z stays finite
    sigma = np.sqrt(np.maximum(var_per_round, 1.0 / n) / n)
    return np.abs(observed - expected) / sigma


def _rate_entry(hits: int, total: int, expected: float) -> dict:
    rate = hits / total if total else 0.0
    z = float(_z(np.array(rate), np.array(expected), np.array(expected * (1 - expected)), max(total, 1)))
    return {"value": rate, "expected": expected, "z": z, "count": int(hits), "trials": int(total)}


def _model_setup(model: str, q: float | None):
    """Return (q, target state, simulator factory, dichotomic flag, step-(iii) rate)."""
    if model == "protocol1":
        q = 0.5 if q is None else _check_model_q(q)

        def make(setting):
            x, y = setting
            return (lambda n, rng: protocol1_batch(x, y, q, n, rng)), (
                bell.projectors_from_bloch(x),
                bell.projectors_from_bloch(y),
            )

        return q, state_q(q), make, True, None
    if model == "erasure":
        q = 0.5 if q is None else _check_model_q(q)

        def make(setting):
            o_a, o_b = setting
            dec_a = decompose_observable(o_a)
            dec_b = decompose_observable(o_b)
            return (lambda n, rng: erasure_batch(dec_a, dec_b, q, n, rng)), (
                dichotomic_povm(o_a),
                dichotomic_povm(o_b),
            )

        return q, erasure_state(q), make, True, None
    if model in ("protocol2-rhoG", "protocol2-rhoGM"):
        q = 0.5 if q is None else _check_model_q(q)
        if model == "protocol2-rhoG":
            base, sigma, target = protocol1_model(q), basis_projector(0, 2), state_rho_G(q)
        else:
            base, sigma, target = erasure_model(q), basis_projector(2, 3), state_rho_GM(q)

        def make(setting):
            povm_a, povm_b = setting
            sim = Protocol2Simulator(povm_a, povm_b, base, sigma, sigma)
            return sim.batch, (povm_a, povm_b)

        return q, target, make, False, 1.0 / base.dim
    raise InvalidParameter(f"unknown model {model!r}; expected one of {MODELS}")


def run_lhv_experiment(
    model: str,
    settings: Sequence,
    rounds: int,
    seed: int,
    *,
    q: float | None = None,
    workers: int = 1,
) -> SimulationReport:
    """Simulate ``rounds`` rounds per setting pair and compare with the Born rule.

    Setting ``k`` draws its chunks from stream ``k`` of ``seed``. Only
    integer counts leave each chunk, so the report does not depend on
    ``workers``.
    """
    if rounds < 10_000:
        raise InvalidParameter("run_lhv_experiment needs at least 10^4 rounds")
    q, target_state, make, dichotomic, stage_rate = _model_setup(model, q)

    empirical, targets, zs, corr_rows, settings_json = [], [], [], [], []
    accepted_total = core_total = 0
    stage_hits = np.zeros(2, dtype=np.int64)
    max_dev = max_z = 0.0
    rate_z: list[float] = []

    for k, setting in enumerate(settings):
        simulate, (povm_a, povm_b) = make(setting)
        na, nb = len(povm_a), len(povm_b)

        if dichotomic:

            def chunk(n, rng, simulate=simulate):
                r = simulate(n, rng)
                cell = (r.a == -1).astype(np.int64) * 2 + (r.b == -1)
                counts = np.bincount(cell, minlength=4)
                return np.concatenate([counts, [int(r.accepted.sum()), int(r.core.sum())]])

        else:

            def chunk(n, rng, simulate=simulate, nb=nb, na=na):
                a, b, ha, hb = simulate(n, rng)
                counts = np.bincount(a * nb + b, minlength=na * nb)
                return np.concatenate([counts, [int(ha.sum()), int(hb.sum())]])

        totals = run_chunked(chunk, rounds, seed, stream=k, workers=workers)
        counts = totals[: na * nb].reshape(na, nb)
        extra = totals[na * nb :]
        p_hat = counts / rounds
        p_true = np.clip(bell.born_joint(target_state, povm_a, povm_b).probs, 0.0, 1.0)
        z = _z(p_hat, p_true, p_true * (1 - p_true), rounds)
        max_dev = max(max_dev, float(np.max(np.abs(p_hat - p_true))))
        max_z = max(max_z, float(np.max(z)))
        empirical.append(p_hat.tolist())
        targets.append(p_true.tolist())
        zs.append(z.tolist())
        settings_json.append(setting_to_json(model, setting))

        if dichotomic:
            accepted_total += int(extra[0])
            core_total += int(extra[1])
            signs = np.array([1.0, -1.0])
            row = {}
            for name, emp, tgt in (
                ("ab", signs @ p_hat @ signs, signs @ p_true @ signs),
                ("a", signs @ p_hat.sum(axis=1), signs @ p_true.sum(axis=1)),
                ("b", signs @ p_hat.sum(axis=0), signs @ p_true.sum(axis=0)),
            ):
                zz = float(_z(np.array(emp), np.array(tgt), np.array(1 - tgt * tgt), rounds))
                max_z = max(max_z, zz)
                row[name] = {"empirical": float(emp), "target": float(tgt), "z": zz}
            corr_rows.append(row)
        else:
            stage_hits += extra[:2]
            for hits in extra[:2]:
                rate_z.append(_rate_entry(int(hits), rounds, stage_rate)["z"])

    rates: dict = {}
    n_settings = len(settings)
    if dichotomic:
        rates["acceptance"] = _rate_entry(accepted_total, core_total, 0.5)
        rates["core"] = _rate_entry(core_total, rounds * n_settings, min(2 * q, 1.0))
        rate_z += [rates["acceptance"]["z"], rates["core"]["z"]]
    else:
        rates["step_iii_A"] = _rate_entry(int(stage_hits[0]), rounds * n_settings, stage_rate)
        rates["step_iii_B"] = _rate_entry(int(stage_hits[1]), rounds * n_settings, stage_rate)
        rates["step_iii_max_setting_z"] = float(max(rate_z)) if rate_z else 0.0
    max_z = max([max_z] + rate_z)

    return SimulationReport(
        model=model,
        q=float(q),
        seed=int(seed),
        rounds=int(rounds),
        settings=settings_json,
        empirical=empirical,
        target=targets,
        z=zs,
        correlators=corr_rows,
        max_abs_dev=max_dev,
        max_z=max_z,
        rates=rates,
    )


def settings_rng(seed: int) -> np.random.Generator:
    """Generator for drawing random settings, disjoint from all simulation streams."""
    return chunk_rng(seed, 1 << 30, 0)
