"""Local and product POVMs, Pauli-basis vectorization, frames and duals."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tensor_core import MPO

__all__ = [
    "PAULIS",
    "PAULI_LABELS",
    "InformationalCompletenessError",
    "LocalPOVM",
    "ProductPOVM",
    "EffectMPO",
    "pauli6",
    "computational_basis",
    "vectorize_effect",
    "devectorize",
    "frame_operator",
    "canonical_duals",
    "dual_matrix",
    "effect_mpo",
]

PAULI_LABELS = ("I", "X", "Y", "Z")
PAULIS = np.array(
    [
        [[1, 0], [0, 1]],
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)
_SQRT2 = np.sqrt(2.0)

_PSD_TOL = 1e-12
_SUM_TOL = 1e-12


class InformationalCompletenessError(ValueError):
    """The effects do not span operator space."""


def vectorize_effect(e: np.ndarray) -> np.ndarray:
    """Pauli-basis coordinates ``Tr[e P_a] / sqrt(2)`` of a Hermitian 2x2 matrix.

    The basis is ``(I, X, Y, Z) / sqrt(2)``, orthonormal under the
    Hilbert-Schmidt product, so the output is real for Hermitian input.
    """
    e = np.asarray(e, dtype=complex)
    if e.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {e.shape}")
    if not np.allclose(e, e.conj().T, atol=1e-12):
        raise ValueError("effect is not Hermitian")
    coeffs = np.einsum("ij,aji->a", e, PAULIS) / _SQRT2
    return coeffs.real.copy()


def devectorize(vec: Sequence[float]) -> np.ndarray:
    """Inverse of :func:`vectorize_effect`."""
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (4,):
        raise ValueError(f"expected 4 Pauli coordinates, got shape {vec.shape}")
    return np.einsum("a,aij->ij", vec, PAULIS) / _SQRT2


@dataclass(frozen=True)
class LocalPOVM:
    """Single-site measurement with ``s`` effects on a ``d``-dimensional space."""

    effects: tuple[np.ndarray, ...]
    labels: tuple[str, ...]

    def __init__(self, effects: Sequence[np.ndarray], labels: Sequence[str] | None = None):
        effects = tuple(np.asarray(e, dtype=complex) for e in effects)
        if not effects:
            raise ValueError("a POVM needs at least one effect")
        d = effects[0].shape[0]
        for k, e in enumerate(effects):
            if e.shape != (d, d):
                raise ValueError(f"effect {k} has shape {e.shape}, expected {(d, d)}")
            if not np.allclose(e, e.conj().T, atol=_PSD_TOL):
                raise ValueError(f"effect {k} is not Hermitian")
            if np.linalg.eigvalsh(e).min() < -_PSD_TOL:
                raise ValueError(f"effect {k} is not positive semidefinite")
        if np.abs(sum(effects) - np.eye(d)).max() > _SUM_TOL:
            raise ValueError("effects do not sum to the identity")
        if labels is None:
            labels = [str(k) for k in range(len(effects))]
        labels = tuple(labels)
        if len(labels) != len(effects):
            raise ValueError("one label per effect is required")
        object.__setattr__(self, "effects", effects)
        object.__setattr__(self, "labels", labels)

    @property
    def s(self) -> int:
        return len(self.effects)

    @property
    def d(self) -> int:
        return self.effects[0].shape[0]

    def matrix(self) -> np.ndarray:
        """``d^2 x s`` real matrix whose columns are the vectorized effects."""
        return np.stack([vectorize_effect(e) for e in self.effects], axis=1)

    @classmethod
    def from_vectors(cls, vectors: Sequence[Sequence[float]], labels: Sequence[str] | None = None) -> LocalPOVM:
        return cls([devectorize(v) for v in vectors], labels)


@dataclass(frozen=True)
class ProductPOVM:
    """Tensor product of (possibly different) local POVMs."""

    locals: tuple[LocalPOVM, ...]

    def __init__(self, locals: Sequence[LocalPOVM]):
        locals = tuple(locals)
        if not locals:
            raise ValueError("a product POVM needs at least one site")
        object.__setattr__(self, "locals", locals)

    @classmethod
    def uniform(cls, local: LocalPOVM, n: int) -> ProductPOVM:
        return cls([local] * n)

    @property
    def n(self) -> int:
        return len(self.locals)

    @property
    def outcome_dims(self) -> list[int]:
        return [p.s for p in self.locals]

    @property
    def r(self) -> int:
        return int(np.prod(self.outcome_dims, dtype=object))


@dataclass(frozen=True)
class EffectMPO:
    """The effect matrix as an MPO: ``(bond, d^2, s, bond)`` per site.

    Column ``k`` of the densified operator is the vectorized effect ``|Pi_k>>``.
    """

    mpo: MPO

    @property
    def n(self) -> int:
        return self.mpo.n

    @property
    def outcome_dims(self) -> list[int]:
        return [t.shape[2] for t in self.mpo.sites]

    @property
    def is_product(self) -> bool:
        return all(b == 1 for b in self.mpo.bond_dims)

    def local_matrices(self) -> list[np.ndarray]:
        """Per-site ``d^2 x s`` matrices; only defined for bond dimension one."""
        if not self.is_product:
            raise ValueError("effect MPO is not a product")
        return [t[0, :, :, 0] for t in self.mpo.sites]

    def transpose(self) -> MPO:
        """``Pi^T`` as an MPO mapping PTM vectors to outcome vectors."""
        return MPO([t.transpose(0, 2, 1, 3) for t in self.mpo.sites])


def _projector(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())


def pauli6() -> LocalPOVM:
    """Randomized single-qubit Pauli measurement as a six-outcome POVM.

    Outcome order is Z+, Z-, X+, X-, Y+, Y-; each effect is a Pauli
    eigenprojector weighted by 1/3.
    """
    s = 1 / np.sqrt(2)
    kets = [
        [1, 0],
        [0, 1],
        [s, s],
        [s, -s],
        [s, 1j * s],
        [s, -1j * s],
    ]
    effects = [_projector(k) / 3 for k in kets]
    return LocalPOVM(effects, ["Z+", "Z-", "X+", "X-", "Y+", "Y-"])


def computational_basis() -> LocalPOVM:
    return LocalPOVM([_projector([1, 0]), _projector([0, 1])], ["0", "1"])


def frame_operator(p: LocalPOVM) -> np.ndarray:
    """``F = sum_k |Pi_k>><<Pi_k|`` in the Pauli basis."""
    m = p.matrix()
    return m @ m.T


def canonical_duals(p: LocalPOVM, allow_incomplete: bool = False) -> list[np.ndarray]:
    """Dual effects ``D_k = F^{-1}(Pi_k)`` as ``d x d`` matrices.

    A singular frame operator raises :class:`InformationalCompletenessError`
    unless ``allow_incomplete`` is set, in which case the pseudo-inverse is
    used and a warning is emitted.
    """
    f = frame_operator(p)
    rank = np.linalg.matrix_rank(f, tol=1e-12 * max(np.abs(f).max(), 1.0))
    if rank < f.shape[0]:
        if not allow_incomplete:
            raise InformationalCompletenessError(
                f"frame operator has rank {rank} < {f.shape[0]}; POVM is not informationally complete"
            )
        warnings.warn("POVM is not informationally complete; using pseudo-inverse duals", RuntimeWarning, stacklevel=2)
        f_inv = np.linalg.pinv(f)
    else:
        f_inv = np.linalg.inv(f)
    dual_vecs = f_inv @ p.matrix()
    return [devectorize(dual_vecs[:, k]) for k in range(p.s)]


def dual_matrix(p: LocalPOVM) -> np.ndarray:
    """``d^2 x s`` real matrix of vectorized canonical duals."""
    return np.stack([vectorize_effect(d) for d in canonical_duals(p)], axis=1)


def effect_mpo(p: ProductPOVM) -> EffectMPO:
    """Bond-dimension-one MPO stacking the product effects."""
    sites = []
    for local in p.locals:
        m = local.matrix()
        sites.append(m.reshape(1, m.shape[0], m.shape[1], 1))
    return EffectMPO(MPO(sites))
