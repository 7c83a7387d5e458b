from __future__ import annotations

import numpy as np
import pytest

import oracles
from tnice import estimator as es
from tnice import observables as ob
from tnice import povm as pv
from tnice import states as stt
from tnice.shadows import CanonicalEstimator, canonical_estimator


def _canonical(pairs):
    o = ob.PauliSum.from_pairs(pairs)
    return canonical_estimator(ob.to_mps(o), pv.ProductPOVM.uniform(pv.pauli6(), o.n))


def test_single_qubit_coefficients():
    np.testing.assert_allclose(_canonical([(1.0, "Z")]).to_dense(), [3, -3, 0, 0, 0, 0], atol=1e-14)
    np.testing.assert_allclose(_canonical([(1.0, "I")]).to_dense(), np.ones(6), atol=1e-14)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_matches_dense_dual_frame(n):
    h = ob.random_two_local(n, seed=n)
    pairs = [(t.coefficient, t.ops) for t in h]
    est = _canonical(pairs)
    assert isinstance(est, CanonicalEstimator)
    effects = oracles.product_effects(n)
    ref = oracles.canonical_coefficients(oracles.observable_matrix(pairs), effects)
    np.testing.assert_allclose(est.to_dense(), ref, atol=1e-10 * np.abs(ref).max())
    if n <= 3:
        rebuilt = oracles.reconstruction(est.to_dense(), effects)
        np.testing.assert_allclose(rebuilt, oracles.observable_matrix(pairs), atol=1e-10)


def test_bond_dimension_follows_observable():
    o = ob.to_mps(ob.random_two_local(6, seed=0, nearest_neighbour=True))
    est = canonical_estimator(o, pv.ProductPOVM.uniform(pv.pauli6(), 6))
    assert est.chi == o.mps.bond_dims


def test_zero_state_second_moment():
    est = _canonical([(1.0, "Z")])
    pm = stt.exact_model(stt.zero_state(1), pv.ProductPOVM.uniform(pv.pauli6(), 1))
    assert es.second_moment(est, pm) == pytest.approx(3.0, abs=1e-13)


def test_ghz3_second_moment_enumeration():
    est = _canonical([(1.0, "XXX")])
    g = stt.ghz(3)
    p = oracles.born(g.to_dense(), oracles.product_effects(3))
    ref = p @ est.to_dense() ** 2
    assert es.second_moment(est, stt.exact_model(g, pv.ProductPOVM.uniform(pv.pauli6(), 3))) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_unbiased_in_exact_mode(n):
    h = ob.random_two_local(n, seed=20 + n)
    state = stt.random_state(n, 2, seed=n)
    est = canonical_estimator(ob.to_mps(h), pv.ProductPOVM.uniform(pv.pauli6(), n))
    pm = stt.exact_model(state, pv.ProductPOVM.uniform(pv.pauli6(), n))
    assert es.mean(est, pm) == pytest.approx(ob.expectation_dense(h, state.to_dense()), abs=1e-10)


def test_parity_second_moment_grows_exponentially():
    sms = []
    for n in range(2, 7):
        est = canonical_estimator(ob.to_mps(ob.parity_observable(n)), pv.ProductPOVM.uniform(pv.pauli6(), n))
        sms.append(es.second_moment(est, stt.exact_model(stt.ghz(n), pv.ProductPOVM.uniform(pv.pauli6(), n))))
    assert np.all(np.diff(sms) > 0)
    assert np.all(np.array(sms[1:]) / np.array(sms[:-1]) >= 2)
    # omega = +-3^n on all-X or all-Y outcome strings (total weight 2 / 3^n), zero elsewhere
    np.testing.assert_allclose(sms, [2 * 3.0**n for n in range(2, 7)], rtol=1e-12)


def test_non_ic_povm_rejected():
    with pytest.raises(pv.InformationalCompletenessError):
        canonical_estimator(ob.to_mps(ob.parity_observable(2)), pv.ProductPOVM.uniform(pv.computational_basis(), 2))
