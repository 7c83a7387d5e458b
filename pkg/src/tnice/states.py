"""Benchmark states, exact outcome probabilities and finite-shot sampling."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from . import tensor_core as tc
from .observables import DENSE_MAX_QUBITS, PauliSum, sparse_matrix
from .povm import PAULIS, ProductPOVM

__all__ = [
    "StateMPS",
    "OutcomeDataset",
    "ExactModel",
    "EmpiricalModel",
    "ghz",
    "product_state",
    "zero_state",
    "random_state",
    "state_from_dense",
    "ground_state_dense",
    "density_ptm_mps",
    "probability_mps",
    "probability_mpo",
    "outcome_probability",
    "sample",
    "exact_model",
    "empirical_model",
    "SHOT_BLOCK",
]

# Shots per RNG substream. Changing it changes every sampled dataset.
SHOT_BLOCK = 4096
_CHUNK_ELEMENTS = 1 << 21


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("TN_ICE_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class StateMPS:
    """Pure qubit state stored as a complex MPS."""

    mps: tc.MPS
    normalized: bool = True

    @property
    def n(self) -> int:
        return self.mps.n

    def to_dense(self) -> np.ndarray:
        return self.mps.to_dense()

    def norm(self) -> float:
        return tc.norm(self.mps)

    def reversed(self) -> StateMPS:
        return StateMPS(self.mps.reversed(), self.normalized)


def _normalized(m: tc.MPS) -> StateMPS:
    m = tc.canonize(m.astype(complex), 0)
    nrm = np.linalg.norm(m.sites[0])
    if nrm == 0:
        raise ValueError("state has zero norm")
    return StateMPS(tc.scale(m, 1.0 / nrm), True)


def ghz(n: int) -> StateMPS:
    """``(|0...0> + |1...1>) / sqrt(2)`` with bond dimension 2."""
    if n < 2:
        raise ValueError("GHZ state needs at least two qubits")
    first = np.zeros((1, 2, 2), dtype=complex)
    first[0, 0, 0] = first[0, 1, 1] = 1 / math.sqrt(2)
    bulk = np.zeros((2, 2, 2), dtype=complex)
    bulk[0, 0, 0] = bulk[1, 1, 1] = 1.0
    last = np.zeros((2, 2, 1), dtype=complex)
    last[0, 0, 0] = last[1, 1, 0] = 1.0
    return StateMPS(tc.MPS([first] + [bulk] * (n - 2) + [last]), True)


def product_state(vectors: Sequence[Sequence[complex]]) -> StateMPS:
    vecs = []
    for v in vectors:
        v = np.asarray(v, dtype=complex)
        vecs.append(v / np.linalg.norm(v))
    return StateMPS(tc.product_mps(vecs), True)


def zero_state(n: int) -> StateMPS:
    return product_state([[1, 0]] * n)


def random_state(n: int, chi: int = 2, seed=None) -> StateMPS:
    """Normalized random complex MPS with Gaussian entries."""
    return _normalized(tc.random_mps(n, 2, chi, seed=seed, dtype=complex))


def random_product_state(n: int, seed=None) -> StateMPS:
    rng = np.random.default_rng(seed)
    return product_state(rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2)))


def state_from_dense(vec: np.ndarray, cutoff: float = 1e-14) -> StateMPS:
    vec = np.asarray(vec, dtype=complex).reshape(-1)
    n = int(round(math.log2(vec.size)))
    if 2**n != vec.size:
        raise ValueError("state length is not a power of two")
    vec = vec / np.linalg.norm(vec)
    return StateMPS(tc.mps_from_dense(vec, [2] * n, cutoff=cutoff), True)


def ground_state_dense(h: PauliSum) -> StateMPS:
    """Lowest eigenvector of a small Hamiltonian, converted exactly to an MPS.

    Up to 10 qubits a full Hermitian eigendecomposition is used and the
    first eigenvector in ascending order is taken. Beyond that (up to the
    12-qubit guard) a Lanczos solve with a fixed start vector is used.
    The global phase is fixed so the largest-magnitude amplitude is real
    and positive.
    """
    if h.n > DENSE_MAX_QUBITS:
        raise ValueError(f"dense ground state limited to {DENSE_MAX_QUBITS} qubits, got {h.n}")
    mat = sparse_matrix(h)
    if h.n <= 10:
        _, vecs = scipy.linalg.eigh(mat.toarray())
        psi = vecs[:, 0]
    else:
        v0 = np.ones(mat.shape[0], dtype=complex)
        _, vecs = scipy.sparse.linalg.eigsh(mat, k=1, which="SA", v0=v0, tol=1e-13)
        psi = vecs[:, 0]
    j = int(np.argmax(np.abs(psi)))
    psi = psi * (abs(psi[j]) / psi[j])
    return state_from_dense(psi)


def _hermitian_basis(chi: int) -> np.ndarray:
    """Orthonormal basis of Hermitian ``chi x chi`` matrices, shape ``(chi^2, chi, chi)``."""
    basis = []
    for a in range(chi):
        m = np.zeros((chi, chi), dtype=complex)
        m[a, a] = 1.0
        basis.append(m)
    for a in range(chi):
        for b in range(a + 1, chi):
            m = np.zeros((chi, chi), dtype=complex)
            m[a, b] = m[b, a] = 1 / math.sqrt(2)
            basis.append(m)
            m = np.zeros((chi, chi), dtype=complex)
            m[a, b] = 1j / math.sqrt(2)
            m[b, a] = -1j / math.sqrt(2)
            basis.append(m)
    return np.array(basis)


def density_ptm_mps(state: StateMPS, cutoff: float = 1e-14) -> tc.MPS:
    """Real MPS of ``|rho>>`` in the normalized Pauli basis.

    The doubled bond ``(a, a')`` is rotated onto a Hermitian-matrix basis,
    in which every site tensor is real.
    """
    sites = []
    for t in state.mps.sites:
        hl = _hermitian_basis(t.shape[0])
        hr = _hermitian_basis(t.shape[2])
        x = np.einsum("xac,aib,qij,cjd,ydb->xqy", hl, t.conj(), PAULIS, t, hr, optimize=True) / math.sqrt(2)
        sites.append(np.ascontiguousarray(x.real))
    out, _ = tc.compress(tc.MPS(sites), cutoff=cutoff)
    return out


def probability_mps(state: StateMPS, povm: ProductPOVM, cutoff: float = 1e-14) -> tc.MPS:
    """Real MPS over outcome indices holding ``p_k = Tr[Pi_k rho]``."""
    if povm.n != state.n:
        raise tc.DimensionError(f"POVM has {povm.n} sites, state has {state.n}")
    rho = density_ptm_mps(state, cutoff)
    sites = []
    for t, local in zip(rho.sites, povm.locals):
        sites.append(np.einsum("aqb,qk->akb", t, local.matrix()))
    out, _ = tc.compress(tc.MPS(sites), cutoff=cutoff)
    return out


def probability_mpo(state: StateMPS, povm: ProductPOVM) -> tc.MPO:
    """Diagonal MPO ``P`` whose diagonal is the Born distribution."""
    sites = []
    for t in probability_mps(state, povm).sites:
        a, s, b = t.shape
        w = np.zeros((a, s, s, b))
        idx = np.arange(s)
        w[:, idx, idx, :] = t
        sites.append(w)
    return tc.MPO(sites)


def outcome_probability(state: StateMPS, povm: ProductPOVM, k: Sequence[int]) -> float:
    """Born probability of one outcome string by direct contraction."""
    if len(k) != state.n or povm.n != state.n:
        raise tc.DimensionError("outcome string, POVM and state sizes differ")
    env = np.ones((1, 1), dtype=complex)
    for t, local, kk in zip(state.mps.sites, povm.locals, k):
        if not 0 <= kk < local.s:
            raise IndexError(f"outcome index {kk} out of range [0, {local.s})")
        env = np.einsum("ac,aib,ij,cjd->bd", env, t.conj(), local.effects[kk], t, optimize=True)
    return float(env[0, 0].real)


@dataclass
class OutcomeDataset:
    """Recorded shots: one row of per-site outcome indices per shot."""

    n: int
    s: list[int]
    shots: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        self.shots = np.asarray(self.shots, dtype=np.int64).reshape(-1, self.n)
        self.s = [int(x) for x in self.s]
        if len(self.s) != self.n:
            raise ValueError("need one outcome count per site")
        if self.shots.size and ((self.shots < 0).any() or (self.shots >= np.array(self.s)).any()):
            raise ValueError("outcome index out of range")

    @property
    def S(self) -> int:
        return int(self.shots.shape[0])

    def __len__(self) -> int:
        return self.S

    def __eq__(self, other) -> bool:
        if not isinstance(other, OutcomeDataset):
            return NotImplemented
        return (
            self.n == other.n
            and self.s == other.s
            and self.seed == other.seed
            and np.array_equal(self.shots, other.shots)
        )


def _sample_block(sites, effects, uniforms: np.ndarray) -> np.ndarray:
    n_shots, n = uniforms.shape
    out = np.empty((n_shots, n), dtype=np.int64)
    chi_max = max(max(t.shape[0], t.shape[2]) for t in sites)
    chunk = max(1, _CHUNK_ELEMENTS // (4 * chi_max * chi_max * 4))
    for lo in range(0, n_shots, chunk):
        hi = min(lo + chunk, n_shots)
        env = np.ones((hi - lo, 1, 1), dtype=complex)
        rows = np.arange(hi - lo)
        for site, (t, eff) in enumerate(zip(sites, effects)):
            y = np.einsum("xac,aib->xibc", env, t.conj())
            z = np.einsum("xibc,cjd->xibjd", y, t)
            m = np.einsum("kij,xibjd->xkbd", eff, z)
            p = np.einsum("xkbb->xk", m).real
            cum = np.cumsum(p, axis=1)
            target = uniforms[lo:hi, site] * cum[:, -1]
            k = np.minimum((cum <= target[:, None]).sum(axis=1), p.shape[1] - 1)
            out[lo:hi, site] = k
            env = m[rows, k] / p[rows, k][:, None, None]
    return out


def _uniforms(seed: int, block: int, count: int, n: int) -> np.ndarray:
    bitgen = np.random.Philox(key=seed).jumped(block)
    return np.random.Generator(bitgen).random((count, n))


def sample(state: StateMPS, povm: ProductPOVM, S: int, seed: int) -> OutcomeDataset:
    """Draw ``S`` i.i.d. outcome strings by sequential conditional sampling.

    Each site is drawn from its marginal conditioned on the outcomes already
    drawn to its left. Shots are processed in blocks of :data:`SHOT_BLOCK`;
    block ``b`` draws its uniforms from a Philox stream keyed by ``seed`` and
    jumped ``b`` times, so the result depends only on ``seed`` and not on the
    number of worker threads (``TN_ICE_THREADS``).
    """
    if S < 1:
        raise ValueError("need at least one shot")
    if seed is None or seed < 0:
        raise ValueError("a non-negative integer seed is required")
    if povm.n != state.n:
        raise tc.DimensionError(f"POVM has {povm.n} sites, state has {state.n}")
    c = tc.canonize(state.mps, 0)
    sites = list(c.sites)
    effects = [np.array(local.effects) for local in povm.locals]
    blocks = [(b, min(SHOT_BLOCK, S - b * SHOT_BLOCK)) for b in range((S + SHOT_BLOCK - 1) // SHOT_BLOCK)]

    def run(block):
        b, count = block
        return _sample_block(sites, effects, _uniforms(seed, b, count, state.n))

    workers = _threads()
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    return OutcomeDataset(state.n, povm.outcome_dims, np.concatenate(parts), seed)


@dataclass(frozen=True)
class ExactModel:
    """Infinite-statistics weights ``p_k`` as an MPS over outcomes."""

    p: tc.MPS
    rho: tc.MPS | None = None

    @property
    def n(self) -> int:
        return self.p.n

    @property
    def outcome_dims(self) -> list[int]:
        return self.p.physical_dims

    def weights_dense(self) -> np.ndarray:
        return self.p.to_dense()


@dataclass(frozen=True)
class EmpiricalModel:
    """Frequencies ``f_k`` from a dataset, stored as distinct rows plus counts."""

    outcomes: np.ndarray
    counts: np.ndarray
    S: int
    outcome_dims: list[int] = field(default_factory=list)

    @property
    def n(self) -> int:
        return int(self.outcomes.shape[1])

    @property
    def weights(self) -> np.ndarray:
        return self.counts / self.S

    def weights_dense(self) -> np.ndarray:
        out = np.zeros(int(np.prod(self.outcome_dims)))
        flat = np.ravel_multi_index(tuple(self.outcomes.T), self.outcome_dims)
        np.add.at(out, flat, self.counts)
        return out / self.S


def exact_model(state: StateMPS, povm: ProductPOVM) -> ExactModel:
    return ExactModel(probability_mps(state, povm), density_ptm_mps(state))


def empirical_model(ds: OutcomeDataset) -> EmpiricalModel:
    if ds.S == 0:
        raise ValueError("dataset is empty")
    uniq, counts = np.unique(ds.shots, axis=0, return_counts=True)
    return EmpiricalModel(np.ascontiguousarray(uniq, dtype=np.int64), counts.astype(np.int64), ds.S, list(ds.s))

