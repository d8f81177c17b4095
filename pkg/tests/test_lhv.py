import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hidden_nonlocality import bell, lhv, qcore, states
from hidden_nonlocality.errors import InvalidParameter, InvalidPovm, NotDichotomic, NotHermitian
from hidden_nonlocality.qcore import PAULIS, PAULI_Z, Povm

from conftest import random_density

N = 1_000_000
TOL = 5 / np.sqrt(N)
seeds = st.integers(min_value=0, max_value=2**32 - 1)


def means(batch):
    return float(np.mean(batch.a * batch.b)), float(np.mean(batch.a)), float(np.mean(batch.b))


def unit(v):
    return np.asarray(v, float) / np.linalg.norm(v)


def trine():
    angles = 2 * np.pi * np.arange(3) / 3
    return Povm(tuple(2 / 3 * qcore.projector(np.array([np.cos(t), np.sin(t)])) for t in angles))


# --------------------------------------------------------------------------
# hidden variable


def test_sphere_moments():
    lam = lhv.sample_sphere_batch(N, np.random.default_rng(1))
    assert np.max(np.abs(np.linalg.norm(lam, axis=1) - 1)) <= 1e-12
    assert np.linalg.norm(lam.mean(axis=0)) <= 5e-3 * np.sqrt(3)
    assert np.mean(lam[:, 2] ** 2) == pytest.approx(1 / 3, abs=0.005)
    single = lhv.sample_sphere(np.random.default_rng(2))
    assert np.linalg.norm(single) == pytest.approx(1.0, abs=1e-12)


# --------------------------------------------------------------------------
# Protocol 1


def test_protocol1_half_reproduces_state_q(rng):
    for seed in range(3):
        x, y = lhv.random_unit_vector(rng), lhv.random_unit_vector(rng)
        b = lhv.protocol1_batch(x, y, 0.5, N, np.random.default_rng(seed))
        ab, a, bb = means(b)
        assert ab == pytest.approx(-x @ y / 2, abs=TOL)
        assert a == pytest.approx(x[2] / 2, abs=TOL)
        assert bb == pytest.approx(0.0, abs=TOL)
        assert np.all(b.core)
        assert b.accepted.mean() == pytest.approx(0.5, abs=5e-3)


def test_protocol1_product_endpoint():
    x, y = unit([0.3, -0.2, 0.9]), unit([1, 1, 0])
    b = lhv.protocol1_batch(x, y, 0.0, N, np.random.default_rng(4))
    ab, a, bb = means(b)
    assert not b.core.any()
    assert not b.accepted.any()
    assert ab == pytest.approx(0.0, abs=TOL)
    assert a == pytest.approx(x[2], abs=TOL)
    assert bb == pytest.approx(0.0, abs=TOL)


def test_protocol1_intermediate_q_matches_born():
    q = 0.3
    x, y = unit([0.1, 0.5, -0.8]), unit([-0.6, 0.2, 0.3])
    b = lhv.protocol1_batch(x, y, q, N, np.random.default_rng(5))
    ab, a, _ = means(b)
    assert ab == pytest.approx(bell.correlator(states.state_q(q), x, y), abs=TOL)
    assert a == pytest.approx((1 - q) * x[2], abs=TOL)
    assert b.core.mean() == pytest.approx(2 * q, abs=TOL)


def test_protocol1_round_and_validity():
    rng = np.random.default_rng(0)
    a, b, acc = lhv.protocol1_round([0, 0, 1], [1, 0, 0], 0.5, rng)
    assert a in (1, -1) and b in (1, -1) and isinstance(acc, bool)
    with pytest.raises(InvalidParameter):
        lhv.protocol1_round([0, 0, 1], [0, 0, 1], 0.6, rng)


@pytest.mark.parametrize("x", [[0, 0, 1], [1, 0, 0], [0.6, 0, 0.8]])
def test_acceptance_density_is_cosine_weighted(x):
    x = unit(x)
    b = lhv.protocol1_batch(x, [0, 0, 1], 0.5, N, np.random.default_rng(6))
    c = b.lam[b.accepted] @ x
    edges = np.linspace(-1, 1, 21)
    counts, _ = np.histogram(c, bins=edges)
    # x.lam is uniform on [-1, 1]; accepted density is |c|, which integrates to 1
    cdf = lambda t: np.sign(t) * t * t / 2  # noqa: E731
    expected = np.diff(cdf(edges)) * c.size
    p = expected / c.size
    z = np.abs(counts - expected) / np.sqrt(c.size * p * (1 - p))
    assert z.max() <= 5


def test_no_signaling_protocol1():
    x = unit([0.2, -0.4, 0.9])
    marginals = []
    for k, y in enumerate([[0, 0, 1], [1, 0, 0], unit([1, 1, 1])]):
        marginals.append(lhv.protocol1_batch(x, y, 0.5, N, np.random.default_rng(100 + k)).a.mean())
    sigma = np.sqrt(2 / N)
    assert max(marginals) - min(marginals) <= 5 * sigma


# --------------------------------------------------------------------------
# observable decomposition


def test_decompose_sigma_z_block():
    dec = lhv.decompose_observable(lhv.qubit_observable_embedded([0, 0, 1]))
    assert (dec.c0, dec.c1, dec.trR) == pytest.approx((1.0, 0.0, 1.0))
    np.testing.assert_allclose(dec.x, [0, 0, 1])


def test_decompose_identity():
    dec = lhv.decompose_observable(np.eye(3))
    assert (dec.c0, dec.c1, dec.trR) == pytest.approx((0.0, 1.0, 1.0))
    np.testing.assert_allclose(dec.x, [0, 0, 1])


def test_decompose_negative_c1():
    dec = lhv.decompose_observable(np.diag([-1.0, -1.0, 1.0]))
    assert dec.c1 == pytest.approx(-1.0)
    assert dec.c0 == pytest.approx(0.0)


def test_decompose_errors():
    with pytest.raises(NotDichotomic):
        lhv.decompose_observable(np.diag([0.5, 1.0, 1.0]))
    with pytest.raises(NotHermitian):
        lhv.decompose_observable(np.array([[0, 1, 0], [0, 0, 0], [0, 0, 1]]))
    with pytest.raises(InvalidParameter):
        lhv.decompose_observable(PAULI_Z)
    relaxed = lhv.decompose_observable(np.diag([0.5, 1.0, 1.0]), strict=False)
    assert relaxed.c1 == pytest.approx(0.75)


def test_decompose_against_pauli_expansion(rng):
    for _ in range(100):
        v = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        v /= np.linalg.norm(v)
        o = 2 * np.outer(v, v.conj()) - np.eye(3)
        dec = lhv.decompose_observable(o)
        block = o[:2, :2]
        # oracle: Pauli coefficients from the explicit 2x2 entries
        vx = (block[0, 1] + block[1, 0]).real / 2
        vy = (block[1, 0] - block[0, 1]).imag / 2
        vz = (block[0, 0] - block[1, 1]).real / 2
        assert dec.c0 == pytest.approx(np.sqrt(vx**2 + vy**2 + vz**2), abs=1e-12)
        assert dec.c1 == pytest.approx((block[0, 0] + block[1, 1]).real / 2, abs=1e-12)
        assert np.max(np.abs(dec.qubit_block() - block)) <= 1e-10
        assert dec.trR == pytest.approx(o[2, 2].real, abs=1e-15)
        assert abs(dec.c1) + dec.c0 <= 1 + 1e-9


def test_erasure_correlation_formula_matches_born(rng):
    s = states.erasure_state(0.5)
    for _ in range(30):
        o_a = lhv.random_dichotomic_observable(3, rng)
        o_b = lhv.random_dichotomic_observable(3, rng)
        da, db = lhv.decompose_observable(o_a), lhv.decompose_observable(o_b)
        joint = bell.born_joint(s, qcore.dichotomic_povm(o_a), qcore.dichotomic_povm(o_b))
        signs = np.array([1, -1])
        ab = signs @ joint.probs @ signs
        predicted = (-da.c0 * db.c0 * (da.x @ db.x) + da.c1 * db.c1 + da.trR * db.c1) / 2
        assert ab == pytest.approx(predicted, abs=1e-12)
        assert signs @ joint.marginal_a() == pytest.approx((da.c1 + da.trR) / 2, abs=1e-12)


# --------------------------------------------------------------------------
# erasure model


def test_erasure_qubit_block_statistics():
    dec_a = lhv.decompose_observable(lhv.qubit_observable_embedded([0, 0, 1], top=1.0))
    y = unit([1, 0, 1])
    dec_b = lhv.decompose_observable(lhv.qubit_observable_embedded(y, top=1.0))
    b = lhv.erasure_batch(dec_a, dec_b, 0.5, N, np.random.default_rng(8))
    ab, a, bb = means(b)
    assert ab == pytest.approx(-y[2] / 2, abs=TOL)
    assert a == pytest.approx(0.5, abs=TOL)
    assert bb == pytest.approx(0.0, abs=TOL)


def test_erasure_identity_observable_is_deterministic():
    dec_a = lhv.decompose_observable(np.eye(3))
    dec_b = lhv.decompose_observable(lhv.qubit_observable_embedded([0, 1, 0]))
    b = lhv.erasure_batch(dec_a, dec_b, 0.5, N, np.random.default_rng(9))
    assert np.all(b.a == 1)
    ab, _, bb = means(b)
    assert ab == pytest.approx(0.0, abs=TOL)
    assert bb == pytest.approx(0.0, abs=TOL)
    a1, b1 = lhv.erasure_round(dec_a, dec_b, 0.5, np.random.default_rng(0))
    assert a1 == 1 and b1 in (1, -1)


def test_no_signaling_erasure(rng):
    o_a = lhv.random_dichotomic_observable(3, rng)
    dec_a = lhv.decompose_observable(o_a)
    marginals = []
    for k in range(3):
        dec_b = lhv.decompose_observable(lhv.random_dichotomic_observable(3, rng))
        marginals.append(lhv.erasure_batch(dec_a, dec_b, 0.5, N, np.random.default_rng(200 + k)).a.mean())
    assert max(marginals) - min(marginals) <= 5 * np.sqrt(2 / N)


def test_models_reject_large_q():
    with pytest.raises(InvalidParameter):
        lhv.erasure_model(0.7)
    with pytest.raises(InvalidParameter):
        lhv.protocol1_model(0.51)


# --------------------------------------------------------------------------
# POVM refinement


def test_refine_projective_measurement():
    refined = lhv.refine_povm(qcore.dichotomic_povm(PAULI_Z))
    assert len(refined) == 2
    assert [w.weight for w in refined] == pytest.approx([1.0, 1.0])
    assert sorted(w.parent for w in refined) == [0, 1]


def test_refine_trine():
    refined = lhv.refine_povm(trine())
    assert len(refined) == 3
    assert [w.weight for w in refined] == pytest.approx([2 / 3] * 3, abs=1e-12)
    for w in refined:
        assert np.max(np.abs(w.P @ w.P - w.P)) <= 1e-12


def test_refine_coarse_grain_preserves_probabilities(rng):
    for _ in range(5):
        povm = lhv.random_povm(3, 4, rng, max_rank=2)
        refined = lhv.refine_povm(povm)
        assert sum(w.weight for w in refined) == pytest.approx(3.0, abs=1e-9)
        rebuilt = Povm(tuple(lhv.coarse_grain(refined, len(povm))))
        for _ in range(20):
            rho = random_density(3, rng)
            np.testing.assert_allclose(rebuilt.probabilities(rho), povm.probabilities(rho), atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(seeds, st.integers(min_value=2, max_value=5), st.sampled_from([2, 3]))
def test_random_povm_is_valid(seed, n_outcomes, d):
    rng = np.random.default_rng(seed)
    povm = lhv.random_povm(d, n_outcomes, rng, max_rank=2)
    assert len(povm) == n_outcomes
    assert np.max(np.abs(sum(povm.elements) - np.eye(d))) <= 1e-9


# --------------------------------------------------------------------------
# Protocol 2


def test_protocol2_round_outputs():
    rng = np.random.default_rng(3)
    base = lhv.protocol1_model(0.5)
    sigma = qcore.basis_projector(0, 2)
    povm = trine()
    seen = set()
    for _ in range(50):
        a, b, sa, sb = lhv.protocol2_round(povm, qcore.dichotomic_povm(PAULI_Z), base, sigma, sigma, rng)
        assert a in povm.labels and b in (1, -1)
        seen.update((sa, sb))
    assert seen == {"iii", "iv"}


def test_protocol2_dimension_check():
    with pytest.raises(InvalidPovm):
        lhv.Protocol2Simulator(trine(), trine(), lhv.erasure_model(), np.eye(3) / 3, np.eye(3) / 3)


@pytest.mark.parametrize("model, d", [("protocol2-rhoG", 2), ("protocol2-rhoGM", 3)])
def test_protocol2_small_experiment(model, d):
    rng = lhv.settings_rng(21)
    rep = lhv.run_lhv_experiment(model, lhv.random_settings(model, 3, rng), 200_000, 21)
    assert rep.passed, rep.max_z
    for side in ("step_iii_A", "step_iii_B"):
        assert rep.rates[side]["expected"] == pytest.approx(1 / d)
        assert rep.rates[side]["z"] <= 5
    for table in rep.empirical:
        assert sum(map(sum, table)) == pytest.approx(1.0, abs=1e-12)


# --------------------------------------------------------------------------
# quadrature


def test_quadrature_examples():
    z = np.array([0.0, 0.0, 1.0])
    assert lhv.sphere_quadrature_correlator(z, z) == pytest.approx(-1.0, abs=1e-6)
    assert lhv.sphere_quadrature_correlator(z, [1, 0, 0]) == pytest.approx(0.0, abs=1e-6)
    sixty = np.array([np.sin(np.pi / 3), 0.0, np.cos(np.pi / 3)])
    assert lhv.sphere_quadrature_correlator(z, sixty) == pytest.approx(-0.5, abs=1e-6)


def test_quadrature_matches_monte_carlo():
    x, y = unit([1, 2, 3]), unit([-1, 0.5, 2])
    lam = lhv.sample_sphere_batch(N, np.random.default_rng(12))
    cx, cy = lam @ x, lam @ y
    # (1/2pi) dOmega = 2 * uniform average on the sphere
    mc = -2 * np.mean(np.abs(cx) * np.sign(cx) * np.sign(cy))
    assert lhv.sphere_quadrature_correlator(x, y) == pytest.approx(mc, abs=5 * 2 / np.sqrt(N))


# --------------------------------------------------------------------------
# harness


def test_run_experiment_protocol1_and_determinism():
    rng = lhv.settings_rng(5)
    setting = lhv.random_settings("protocol1", 3, rng)
    first = lhv.run_lhv_experiment("protocol1", setting, 100_000, 5)
    second = lhv.run_lhv_experiment("protocol1", setting, 100_000, 5, workers=2)
    assert json.dumps(first.to_dict(), sort_keys=True) == json.dumps(second.to_dict(), sort_keys=True)
    assert first.passed
    assert first.rates["acceptance"]["z"] <= 5
    other = lhv.run_lhv_experiment("protocol1", setting, 100_000, 6)
    assert other.empirical != first.empirical


def test_run_experiment_validation():
    setting = lhv.random_settings("protocol1", 1, lhv.settings_rng(0))
    with pytest.raises(InvalidParameter):
        lhv.run_lhv_experiment("protocol1", setting, 9_999, 0)
    with pytest.raises(InvalidParameter):
        lhv.run_lhv_experiment("werner", setting, 10_000, 0)
    with pytest.raises(InvalidParameter):
        lhv.random_settings("werner", 1, lhv.settings_rng(0))


@pytest.mark.parametrize("model", lhv.MODELS)
def test_settings_json_round_trip(model):
    original = lhv.random_settings(model, 2, lhv.settings_rng(9))
    for setting in original:
        encoded = json.loads(json.dumps(lhv.setting_to_json(model, setting)))
        decoded = lhv.setting_from_json(model, encoded)
        for before, after in zip(setting, decoded):
            if isinstance(before, Povm):
                for e1, e2 in zip(before.elements, after.elements):
                    assert np.array_equal(e1, e2)
            else:
                np.testing.assert_allclose(after, before, atol=1e-15)


def test_erasure_settings_are_dichotomic():
    for o_a, o_b in lhv.random_settings("erasure", 6, lhv.settings_rng(1)):
        for o in (o_a, o_b):
            assert np.max(np.abs(o @ o - np.eye(3))) <= 1e-9


def test_pauli_constants():
    for s in PAULIS:
        np.testing.assert_allclose(s @ s, np.eye(2))
