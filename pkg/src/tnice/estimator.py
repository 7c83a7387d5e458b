"""Estimator MPS type and the global contractions defining its statistics.

An estimator is a real MPS ``|omega>>`` over outcome indices. For a
probability model ``P`` (exact Born weights or empirical frequencies) and an
effect map ``Pi``:

* mean ``E[omega] = sum_k p_k omega_k``
* second moment ``E[omega^2] = <<omega|P|omega>>``
* reconstructed observable ``|O_omega>> = Pi |omega>>``
* penalty ``|| |O>> - Pi|omega>> ||_2``
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from . import tensor_core as tc
from .observables import ObservableMPS
from .povm import EffectMPO
from .states import EmpiricalModel, ExactModel, OutcomeDataset

__all__ = [
    "EstimatorMPS",
    "estimator_values",
    "reconstruct",
    "mean",
    "second_moment",
    "penalty",
    "cost",
]


@dataclass(frozen=True)
class EstimatorMPS:
    """Reconstruction coefficients ``omega_k`` as a real MPS."""

    mps: tc.MPS
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if any(np.iscomplexobj(t) for t in self.mps.sites):
            raise TypeError("estimator tensors must be real")

    @property
    def n(self) -> int:
        return self.mps.n

    @property
    def outcome_dims(self) -> list[int]:
        return self.mps.physical_dims

    @property
    def chi(self) -> list[int]:
        return self.mps.bond_dims

    @property
    def max_bond(self) -> int:
        return max(self.chi)

    def to_dense(self) -> np.ndarray:
        return self.mps.to_dense()

    def values(self, outcomes) -> np.ndarray:
        return estimator_values(self, outcomes)


def _check_dims(est: EstimatorMPS, dims) -> None:
    if list(dims) != est.outcome_dims:
        raise tc.DimensionError(f"outcome extents {list(dims)} do not match estimator {est.outcome_dims}")


def estimator_values(est: EstimatorMPS, outcomes) -> np.ndarray:
    """``omega_k`` for each row of an integer outcome array (or a dataset)."""
    if isinstance(outcomes, OutcomeDataset):
        _check_dims(est, outcomes.s)
        outcomes = outcomes.shots
    k = np.asarray(outcomes, dtype=np.int64)
    if k.ndim != 2 or k.shape[1] != est.n:
        raise tc.DimensionError(f"expected outcome rows of length {est.n}, got shape {k.shape}")
    if k.size and ((k < 0).any() or (k >= np.array(est.outcome_dims)).any()):
        raise IndexError("outcome index out of range")
    return kernels.chain_values([np.asarray(t, dtype=float) for t in est.mps.sites], k)


def reconstruct(est: EstimatorMPS, eff: EffectMPO) -> tc.MPS:
    """``Pi |omega>>`` as an MPS with physical extent ``d^2``."""
    _check_dims(est, eff.outcome_dims)
    if eff.is_product:
        sites = [np.einsum("qk,akb->aqb", m, t) for m, t in zip(eff.local_matrices(), est.mps.sites)]
        return tc.MPS(sites)
    return tc.apply_mpo(eff.mpo, est.mps)


def weighted_left(env: np.ndarray, w: np.ndarray, p: np.ndarray) -> np.ndarray:
    """``sum env[x,c,y] w[x,k,b] p[c,k,d] w[y,k,z]`` as ``(b, d, z)``.

    The outcome index is shared by three tensors, so it is looped over
    explicitly to keep every step a matrix product.
    """
    t1 = np.tensordot(env, w, axes=(0, 0))  # (c, y, k, b)
    out = np.zeros((w.shape[2], p.shape[2], w.shape[2]))
    for k in range(w.shape[1]):
        t2 = np.tensordot(t1[:, :, k, :], p[:, k, :], axes=(0, 0))  # (y, b, d)
        out += np.tensordot(t2, w[:, k, :], axes=(0, 0))
    return out


def weighted_right(env: np.ndarray, w: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Mirror of :func:`weighted_left`: ``(x, c, y)`` from a right environment ``(b, d, z)``."""
    t1 = np.tensordot(w, env, axes=(2, 0))  # (x, k, d, z)
    out = np.zeros((w.shape[0], p.shape[0], w.shape[0]))
    for k in range(w.shape[1]):
        t2 = np.tensordot(p[:, k, :], t1[:, k, :, :], axes=(1, 1))  # (c, x, z)
        out += np.tensordot(t2, w[:, k, :], axes=(2, 1)).transpose(1, 0, 2)
    return out


def _exact_pair(est: EstimatorMPS, pm: ExactModel, square: bool) -> float:
    _check_dims(est, pm.outcome_dims)
    if square:
        env = np.ones((1, 1, 1))
        for w, p in zip(est.mps.sites, pm.p.sites):
            env = weighted_left(env, w, p)
        return float(env[0, 0, 0])
    return float(tc.inner(pm.p, est.mps))


def mean(est: EstimatorMPS, pm) -> float:
    """First moment of the estimator under the probability model."""
    if isinstance(pm, ExactModel):
        return _exact_pair(est, pm, square=False)
    if isinstance(pm, EmpiricalModel):
        _check_dims(est, pm.outcome_dims)
        return float(np.dot(pm.counts, estimator_values(est, pm.outcomes)) / pm.S)
    raise TypeError(f"unsupported probability model {type(pm).__name__}")


def second_moment(est: EstimatorMPS, pm) -> float:
    """``<<omega|P|omega>>``; exact contraction or frequency-weighted sum of squares."""
    if isinstance(pm, ExactModel):
        return _exact_pair(est, pm, square=True)
    if isinstance(pm, EmpiricalModel):
        _check_dims(est, pm.outcome_dims)
        vals = estimator_values(est, pm.outcomes)
        return float(np.dot(pm.counts, vals * vals) / pm.S)
    raise TypeError(f"unsupported probability model {type(pm).__name__}")


def penalty(est: EstimatorMPS, eff: EffectMPO, obs: ObservableMPS) -> float:
    """Reconstruction error ``|| |O>> - Pi|omega>> ||_2``.

    Computed as the norm of the residual MPS rather than by expanding the
    square, which would lose all precision once the penalty drops below
    about ``1e-8 * ||O||``.
    """
    return _residual_norm(reconstruct(est, eff), obs)


def _residual_norm(rec: tc.MPS, obs: ObservableMPS) -> float:
    return tc.norm(tc.add(obs.mps, tc.scale(rec, -1.0)))


def cost(est: EstimatorMPS, eff: EffectMPO, obs: ObservableMPS, pm, lam: float) -> tuple[float, float, float]:
    """Total cost without the constant ``||O||^2``, the second moment and the penalty.

    ``L = (1 - lam) <<omega|P|omega>> + lam (<<omega|Pi^T Pi|omega>> - 2 <<omega|Pi^T|O>>)``,
    evaluated as ``(1 - lam) E[omega^2] + lam (penalty^2 - ||O||^2)``.
    """
    sm = second_moment(est, pm)
    pen = penalty(est, eff, obs)
    return (1.0 - lam) * sm + lam * (pen * pen - obs.norm2**2), sm, pen
