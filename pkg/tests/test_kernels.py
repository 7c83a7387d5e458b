from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tnice import kernels

BACKENDS = ["python"]
try:
    kernels.backend_module("cython")
    BACKENDS.append("cython")
except ImportError:
    pass


def _case(seed, U, s, chi_l, chi_r):
    rng = np.random.default_rng(seed)
    return (
        rng.normal(size=(U, chi_l)),
        rng.normal(size=(chi_l, s, chi_r)),
        rng.normal(size=(U, chi_r)),
        rng.integers(0, s, size=U).astype(np.int64),
        rng.random(U),
    )


shapes = dict(seed=st.integers(0, 2**20), U=st.integers(1, 40), s=st.integers(1, 6), chi_l=st.integers(1, 5), chi_r=st.integers(1, 5))


@pytest.mark.parametrize("name", BACKENDS)
@settings(max_examples=40, deadline=None)
@given(**shapes)
def test_steps_match_einsum(name, seed, U, s, chi_l, chi_r):
    mod = kernels.backend_module(name)
    left, t, right, k, _ = _case(seed, U, s, chi_l, chi_r)
    ts = t[:, k, :]  # (chi_l, U, chi_r)
    np.testing.assert_allclose(mod.left_step(left, t, k), np.einsum("ua,aub->ub", left, ts), atol=1e-12)
    np.testing.assert_allclose(mod.right_step(right, t, k), np.einsum("aub,ub->ua", ts, right), atol=1e-12)


@pytest.mark.parametrize("name", BACKENDS)
@settings(max_examples=40, deadline=None)
@given(**shapes)
def test_moment_blocks_match_outer_products(name, seed, U, s, chi_l, chi_r):
    mod = kernels.backend_module(name)
    left, _, right, k, w = _case(seed, U, s, chi_l, chi_r)
    x = np.einsum("ua,ub->uab", left, right).reshape(U, -1)
    ref = np.zeros((s, x.shape[1], x.shape[1]))
    for u in range(U):
        ref[k[u]] += w[u] * np.outer(x[u], x[u])
    np.testing.assert_allclose(mod.moment_blocks(left, right, k, w, s), ref, atol=1e-11)


@pytest.mark.parametrize("name", BACKENDS)
@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**20), n=st.integers(1, 5), s=st.integers(1, 4), chi=st.integers(1, 4), U=st.integers(1, 30))
def test_chain_values_match_dense(name, seed, n, s, chi, U):
    mod = kernels.backend_module(name)
    rng = np.random.default_rng(seed)
    bonds = [1] + [chi] * (n - 1) + [1]
    tensors = [rng.normal(size=(bonds[i], s, bonds[i + 1])) for i in range(n)]
    out = rng.integers(0, s, size=(U, n)).astype(np.int64)
    dense = tensors[0].reshape(s, -1)
    for t in tensors[1:]:
        dense = np.tensordot(dense, t, axes=(-1, 0))
    dense = dense.reshape(-1)
    ref = dense[np.ravel_multi_index(out.T, (s,) * n)]
    np.testing.assert_allclose(mod.chain_values(tensors, out), ref, rtol=1e-12, atol=1e-12)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernels not built")
@settings(max_examples=30, deadline=None)
@given(**shapes)
def test_backends_agree(seed, U, s, chi_l, chi_r):
    py, cy = (kernels.backend_module(b) for b in ("python", "cython"))
    left, t, right, k, w = _case(seed, U, s, chi_l, chi_r)
    np.testing.assert_allclose(cy.left_step(left, t, k), py.left_step(left, t, k), rtol=1e-13, atol=1e-13)
    np.testing.assert_allclose(cy.right_step(right, t, k), py.right_step(right, t, k), rtol=1e-13, atol=1e-13)
    np.testing.assert_allclose(cy.moment_blocks(left, right, k, w, s), py.moment_blocks(left, right, k, w, s), rtol=1e-12, atol=1e-12)


def test_wrappers_coerce_dtypes():
    left = np.ones((3, 2), dtype=np.float32)
    t = np.ones((2, 2, 1))
    k = np.array([0, 1, 1], dtype=np.int32)
    np.testing.assert_allclose(kernels.left_step(left, t, k), np.full((3, 1), 2.0))
    assert kernels.chain_values([t[:1]], np.zeros((0, 1), dtype=int)).shape == (0,)


def test_pure_python_switch():
    env = dict(os.environ, TN_ICE_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import tnice.kernels as k; print(k.BACKEND)"], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
