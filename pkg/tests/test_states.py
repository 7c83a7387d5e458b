from __future__ import annotations

import itertools

import numpy as np
import pytest

import oracles
from tnice import observables as ob
from tnice import povm as pv
from tnice import states as stt


def _p6(n):
    return pv.ProductPOVM.uniform(pv.pauli6(), n)


def _born(state, n):
    return oracles.born(state.to_dense(), oracles.product_effects(n))


def test_ghz_definition():
    np.testing.assert_allclose(stt.ghz(2).to_dense(), np.array([1, 0, 0, 1]) / np.sqrt(2))
    g = stt.ghz(6)
    assert max(g.mps.bond_dims) == 2
    assert g.norm() == pytest.approx(1.0, abs=1e-14)
    assert ob.expectation_dense(ob.parity_observable(6), g.to_dense()) == pytest.approx(2.0, abs=1e-12)


def test_outcome_probability_on_zero_state():
    z = stt.zero_state(1)
    p = _p6(1)
    assert stt.outcome_probability(z, p, [0]) == pytest.approx(1 / 3, abs=1e-15)
    assert stt.outcome_probability(z, p, [1]) == pytest.approx(0.0, abs=1e-15)


def test_probability_mpo_single_qubit():
    d = stt.probability_mpo(stt.zero_state(1), _p6(1)).to_dense()
    np.testing.assert_allclose(d, np.diag([1 / 3, 0, 1 / 6, 1 / 6, 1 / 6, 1 / 6]), atol=1e-15)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_probabilities_match_born_oracle(n):
    state = stt.random_state(n, 2, seed=n)
    ref = _born(state, n)
    np.testing.assert_allclose(stt.probability_mps(state, _p6(n)).to_dense(), ref, atol=1e-14)
    mpo = stt.probability_mpo(state, _p6(n)).to_dense()
    np.testing.assert_allclose(np.diag(mpo), ref, atol=1e-14)
    np.testing.assert_allclose(mpo - np.diag(np.diag(mpo)), 0.0, atol=1e-15)
    assert np.trace(mpo) == pytest.approx(1.0, abs=1e-12)
    assert np.diag(mpo).min() >= -1e-12
    for k in [(0,) * n, (5,) * n, tuple(range(n))]:
        assert stt.outcome_probability(state, _p6(n), k) == pytest.approx(ref[np.ravel_multi_index(k, (6,) * n)], abs=1e-14)


def test_ghz3_enumeration():
    g = stt.ghz(3)
    p = _p6(3)
    diag = np.diag(stt.probability_mpo(g, p).to_dense())
    enum = [stt.outcome_probability(g, p, k) for k in itertools.product(range(6), repeat=3)]
    np.testing.assert_allclose(diag, enum, atol=1e-15)


def test_exact_weights_sum_to_one():
    m = stt.exact_model(stt.random_state(5, 3, seed=1), _p6(5))
    assert m.weights_dense().sum() == pytest.approx(1.0, abs=1e-10)


def test_sample_never_hits_zero_probability_outcome():
    ds = stt.sample(stt.zero_state(3), _p6(3), 5000, seed=3)
    assert not np.any(ds.shots == 1)  # Z- on |0>


def test_sample_plus_state_frequencies():
    S = 10**5
    ds = stt.sample(stt.product_state([[1, 1]]), _p6(1), S, seed=12)
    f = np.bincount(ds.shots[:, 0], minlength=6) / S
    assert abs(f[2] - 1 / 3) <= 5 * np.sqrt((1 / 3) * (2 / 3) / S)
    assert f[3] == 0.0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_empirical_frequencies_match_born(seed):
    n, S = 3, 2 * 10**5
    state = stt.random_state(n, 2, seed=100 + seed)
    ref = _born(state, n)
    ds = stt.sample(state, _p6(n), S, seed=seed)
    idx = np.ravel_multi_index(ds.shots.T, (6,) * n)
    f = np.bincount(idx, minlength=6**n) / S
    tol = 5 * np.sqrt(ref * (1 - ref) / S) + 1e-12
    assert np.all(np.abs(f - ref) <= tol)


def test_sampling_is_deterministic_and_thread_independent(monkeypatch):
    state = stt.random_state(4, 2, seed=7)
    monkeypatch.setenv("TN_ICE_THREADS", "1")
    a = stt.sample(state, _p6(4), 10000, seed=5)
    monkeypatch.setenv("TN_ICE_THREADS", "3")
    b = stt.sample(state, _p6(4), 10000, seed=5)
    assert a == b
    assert a.S == 10000 and a.seed == 5
    c = stt.sample(state, _p6(4), 10000, seed=6)
    assert a != c


def test_sampling_prefix_stability():
    state = stt.ghz(3)
    a = stt.sample(state, _p6(3), 5000, seed=1)
    b = stt.sample(state, _p6(3), 9000, seed=1)
    np.testing.assert_array_equal(a.shots, b.shots[:5000])


def test_site_reversal_statistics():
    n, S = 3, 10**5
    state = stt.random_state(n, 2, seed=21)
    fwd = stt.sample(state, _p6(n), S, seed=1)
    rev = stt.sample(state.reversed(), _p6(n), S, seed=2)
    f1 = np.bincount(np.ravel_multi_index(fwd.shots.T, (6,) * n), minlength=6**n) / S
    f2 = np.bincount(np.ravel_multi_index(rev.shots[:, ::-1].T, (6,) * n), minlength=6**n) / S
    p = _born(state, n)
    sigma = np.sqrt(2 * p * (1 - p) / S) + 1e-12
    assert np.all(np.abs(f1 - f2) <= 5 * sigma)


def test_empirical_model_counts():
    ds = stt.OutcomeDataset(2, [6, 6], np.array([[0, 1], [2, 3], [0, 1]]), seed=None)
    m = stt.empirical_model(ds)
    assert m.S == 3
    assert m.weights.sum() == 1.0
    w = m.weights_dense()
    assert w[0 * 6 + 1] == pytest.approx(2 / 3) and w[2 * 6 + 3] == pytest.approx(1 / 3)


def test_dataset_validation():
    with pytest.raises(ValueError):
        stt.OutcomeDataset(2, [6, 6], np.array([[0, 6]]), seed=None)
    with pytest.raises(ValueError):
        stt.OutcomeDataset(2, [6, 6], np.array([[0, 1, 2]]), seed=None)


def test_ground_state_simple_cases():
    g = stt.ground_state_dense(ob.PauliSum.from_pairs([(-1.0, "Z")]))
    np.testing.assert_allclose(g.to_dense(), [1, 0], atol=1e-12)
    h = ob.PauliSum.from_pairs([(-1.0, "XX"), (-1.0, "YY")])
    psi = stt.ground_state_dense(h).to_dense()
    dense = oracles.observable_matrix([(-1.0, "XX"), (-1.0, "YY")])
    assert ob.expectation_dense(h, psi) == pytest.approx(np.linalg.eigvalsh(dense)[0], abs=1e-10)


@pytest.mark.parametrize("n", [4, 11])
def test_ground_state_is_eigenstate(n):
    h = ob.random_two_local(n, seed=0, nearest_neighbour=True)
    psi = stt.ground_state_dense(h).to_dense()
    hpsi = ob.apply_pauli_sum(h, psi)
    e = np.vdot(psi, hpsi).real
    assert np.vdot(hpsi, hpsi).real - e * e <= 1e-10 * max(1.0, e * e)


def test_ground_state_size_guard():
    with pytest.raises(ValueError):
        stt.ground_state_dense(ob.parity_observable(13))
