"""Dense tensor algebra and matrix product state / operator machinery.

Dense tensors are plain :class:`numpy.ndarray` objects. Chains use one fixed
axis order everywhere:

* MPS site tensors: ``(left, physical, right)``
* MPO site tensors: ``(left, physical_out, physical_in, right)``

Boundary bonds always have extent 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

__all__ = [
    "DimensionError",
    "MPS",
    "MPO",
    "contract",
    "canonize",
    "inner",
    "norm",
    "apply_mpo",
    "add",
    "scale",
    "compress",
    "random_mps",
    "product_mps",
    "mps_from_dense",
    "isometry_residual",
]


class DimensionError(ValueError):
    """Raised when tensor extents do not line up."""


def _check_chain(tensors: Sequence[np.ndarray], rank: int, kind: str) -> None:
    if len(tensors) == 0:
        raise DimensionError(f"{kind} needs at least one site")
    for i, t in enumerate(tensors):
        if t.ndim != rank:
            raise DimensionError(f"{kind} site {i} has rank {t.ndim}, expected {rank}")
        if min(t.shape) < 1:
            raise DimensionError(f"{kind} site {i} has an empty axis {t.shape}")
    if tensors[0].shape[0] != 1 or tensors[-1].shape[-1] != 1:
        raise DimensionError(f"{kind} boundary bonds must have extent 1")
    for i in range(len(tensors) - 1):
        if tensors[i].shape[-1] != tensors[i + 1].shape[0]:
            raise DimensionError(
                f"{kind} bond {i}-{i + 1} mismatch: "
                f"{tensors[i].shape[-1]} != {tensors[i + 1].shape[0]}"
            )


@dataclass(frozen=True)
class MPS:
    """Chain of rank-3 tensors ``(left, physical, right)``.

    ``canonical_center`` records the orthogonality center when known; every
    operation that could break the gauge returns an MPS with it unset.
    """

    sites: tuple[np.ndarray, ...]
    canonical_center: int | None = None

    def __init__(self, sites: Sequence[np.ndarray], canonical_center: int | None = None):
        sites = tuple(np.asarray(t) for t in sites)
        _check_chain(sites, 3, "MPS")
        if canonical_center is not None and not 0 <= canonical_center < len(sites):
            raise ValueError(f"canonical center {canonical_center} out of range")
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "canonical_center", canonical_center)

    @property
    def n(self) -> int:
        return len(self.sites)

    @property
    def physical_dims(self) -> list[int]:
        return [t.shape[1] for t in self.sites]

    @property
    def bond_dims(self) -> list[int]:
        """All ``n + 1`` bond extents, boundaries included."""
        return [self.sites[0].shape[0]] + [t.shape[2] for t in self.sites]

    @property
    def dtype(self) -> np.dtype:
        return np.result_type(*self.sites)

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> np.ndarray:
        return self.sites[i]

    def to_dense(self) -> np.ndarray:
        """Contract the chain into a flat vector (first site most significant)."""
        out = self.sites[0].reshape(-1, self.sites[0].shape[2])
        for t in self.sites[1:]:
            out = (out @ t.reshape(t.shape[0], -1)).reshape(-1, t.shape[2])
        return out.reshape(-1)

    def conj(self) -> MPS:
        return MPS([t.conj() for t in self.sites], self.canonical_center)

    def reversed(self) -> MPS:
        """Same state with the site order flipped."""
        return MPS([t.transpose(2, 1, 0) for t in self.sites[::-1]])

    def astype(self, dtype) -> MPS:
        return MPS([t.astype(dtype) for t in self.sites], self.canonical_center)


@dataclass(frozen=True)
class MPO:
    """Chain of rank-4 tensors ``(left, physical_out, physical_in, right)``."""

    sites: tuple[np.ndarray, ...] = field()

    def __init__(self, sites: Sequence[np.ndarray]):
        sites = tuple(np.asarray(t) for t in sites)
        _check_chain(sites, 4, "MPO")
        object.__setattr__(self, "sites", sites)

    @property
    def n(self) -> int:
        return len(self.sites)

    @property
    def bond_dims(self) -> list[int]:
        return [self.sites[0].shape[0]] + [t.shape[3] for t in self.sites]

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> np.ndarray:
        return self.sites[i]

    def to_dense(self) -> np.ndarray:
        """Dense matrix with rows indexed by outputs, columns by inputs."""
        first = self.sites[0]
        out = first.reshape(first.shape[1], first.shape[2], first.shape[3])
        rows, cols = first.shape[1], first.shape[2]
        for t in self.sites[1:]:
            out = np.einsum("ijb,bklc->ikjlc", out, t)
            rows *= t.shape[1]
            cols *= t.shape[2]
            out = out.reshape(rows, cols, t.shape[3])
        return out.reshape(rows, cols)


def contract(a: np.ndarray, b: np.ndarray, axes: tuple[Sequence[int], Sequence[int]]) -> np.ndarray:
    """Contract paired axes of two tensors.

    Output axes are the free axes of ``a`` followed by those of ``b``, each in
    their original order.

    >>> contract(np.array([1.0, 2.0]), np.array([1.0, 2.0]), ([0], [0]))
    array(5.)
    """
    axes_a, axes_b = (list(x) for x in axes)
    if len(axes_a) != len(axes_b):
        raise DimensionError("paired axis lists differ in length")
    for i, j in zip(axes_a, axes_b):
        if not (-a.ndim <= i < a.ndim and -b.ndim <= j < b.ndim):
            raise DimensionError(f"axis pair ({i}, {j}) out of range")
        if a.shape[i] != b.shape[j]:
            raise DimensionError(f"axis {i} of a (extent {a.shape[i]}) does not match axis {j} of b (extent {b.shape[j]})")
    return np.tensordot(a, b, axes=(axes_a, axes_b))


def _left_qr(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    chi_l, d, chi_r = t.shape
    q, r = np.linalg.qr(t.reshape(chi_l * d, chi_r))
    return q.reshape(chi_l, d, q.shape[1]), r


def _right_qr(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Factor ``t = r @ q`` with ``q`` a right isometry."""
    chi_l, d, chi_r = t.shape
    q, r = np.linalg.qr(t.reshape(chi_l, d * chi_r).T)
    return q.T.reshape(q.shape[1], d, chi_r), r.T


def canonize(m: MPS, center: int) -> MPS:
    """Bring ``m`` to mixed canonical form around ``center`` using QR sweeps.

    Sites left of ``center`` become left isometries, sites right of it right
    isometries. Bond extents may shrink where they exceed the local rank
    bound. The represented vector is unchanged.
    """
    n = m.n
    if not 0 <= center < n:
        raise ValueError(f"center {center} out of range for {n} sites")
    sites = list(m.sites)
    start_left, start_right = 0, n - 1
    if m.canonical_center is not None:
        # Sites already in the right gauge need no work.
        start_left = min(m.canonical_center, center)
        start_right = max(m.canonical_center, center)
    for i in range(start_left, center):
        q, r = _left_qr(sites[i])
        sites[i] = q
        sites[i + 1] = np.tensordot(r, sites[i + 1], axes=(1, 0))
    for i in range(start_right, center, -1):
        q, r = _right_qr(sites[i])
        sites[i] = q
        sites[i - 1] = np.tensordot(sites[i - 1], r, axes=(2, 0))
    return MPS(sites, canonical_center=center)


def isometry_residual(t: np.ndarray, side: str) -> float:
    """Frobenius distance of a site tensor from a left or right isometry."""
    chi_l, d, chi_r = t.shape
    if side == "left":
        mat = t.reshape(chi_l * d, chi_r)
        gram = mat.conj().T @ mat
    elif side == "right":
        mat = t.reshape(chi_l, d * chi_r)
        gram = mat @ mat.conj().T
    else:
        raise ValueError("side must be 'left' or 'right'")
    return float(np.linalg.norm(gram - np.eye(gram.shape[0])))


def _check_pair(a: MPS, b: MPS) -> None:
    if a.n != b.n:
        raise DimensionError(f"site counts differ: {a.n} != {b.n}")
    if a.physical_dims != b.physical_dims:
        raise DimensionError(f"physical extents differ: {a.physical_dims} != {b.physical_dims}")


def inner(a: MPS, b: MPS) -> complex | float:
    """``<a|b>`` with ``a`` conjugated."""
    _check_pair(a, b)
    env = np.ones((1, 1), dtype=np.result_type(a.dtype, b.dtype))
    for ta, tb in zip(a.sites, b.sites):
        env = np.tensordot(env, ta.conj(), axes=(0, 0))  # (b, phys, a')
        env = np.tensordot(env, tb, axes=([0, 1], [0, 1]))  # (a', b')
    return env[0, 0]


def norm(m: MPS) -> float:
    """2-norm computed through an orthogonal sweep.

    Accurate to roughly machine precision relative to the largest
    component, which matters for near-cancelling sums.
    """
    c = canonize(m, 0)
    return float(np.linalg.norm(c.sites[0]))


def apply_mpo(op: MPO, v: MPS) -> MPS:
    """Exact MPO-MPS product; output bonds are products of input bonds."""
    if op.n != v.n:
        raise DimensionError(f"site counts differ: {op.n} != {v.n}")
    out = []
    for i, (w, t) in enumerate(zip(op.sites, v.sites)):
        if w.shape[2] != t.shape[1]:
            raise DimensionError(f"site {i}: operator input extent {w.shape[2]} != state extent {t.shape[1]}")
        x = np.einsum("aoib,cid->acobd", w, t)
        a, c, o, b, d = x.shape
        out.append(x.reshape(a * c, o, b * d))
    return MPS(out)


def scale(m: MPS, factor) -> MPS:
    sites = list(m.sites)
    c = m.canonical_center if m.canonical_center is not None else 0
    sites[c] = sites[c] * factor
    return MPS(sites, m.canonical_center)


def add(a: MPS, b: MPS) -> MPS:
    """Direct-sum representation of ``a + b``."""
    _check_pair(a, b)
    n = a.n
    if n == 1:
        return MPS([a.sites[0] + b.sites[0]])
    dtype = np.result_type(a.dtype, b.dtype)
    out = []
    for i, (ta, tb) in enumerate(zip(a.sites, b.sites)):
        la, d, ra = ta.shape
        lb, _, rb = tb.shape
        if i == 0:
            out.append(np.concatenate([ta, tb], axis=2).astype(dtype, copy=False))
        elif i == n - 1:
            out.append(np.concatenate([ta, tb], axis=0).astype(dtype, copy=False))
        else:
            t = np.zeros((la + lb, d, ra + rb), dtype=dtype)
            t[:la, :, :ra] = ta
            t[la:, :, ra:] = tb
            out.append(t)
    return MPS(out)


def _truncate(s: np.ndarray, chi_max: int | None, cutoff: float) -> int:
    keep = len(s)
    if s.size and s[0] > 0:
        keep = int(np.count_nonzero(s > cutoff * s[0]))
    keep = max(keep, 1)
    if chi_max is not None:
        keep = min(keep, chi_max)
    return keep


def compress(m: MPS, chi_max: int | None = None, cutoff: float = 1e-14) -> tuple[MPS, float]:
    """SVD truncation after a left-canonical sweep.

    Singular values below ``cutoff`` times the largest one on each bond are
    dropped, and at most ``chi_max`` are kept.

    Returns
    -------
    MPS
        Compressed chain, right-canonical with center 0.
    float
        Discarded weight: square root of the summed squares of dropped
        singular values, relative to the norm of ``m``.
    """
    n = m.n
    c = canonize(m, n - 1)
    sites = list(c.sites)
    total = float(np.linalg.norm(sites[-1]))
    discarded = 0.0
    for i in range(n - 1, 0, -1):
        t = sites[i]
        chi_l, d, chi_r = t.shape
        u, s, vh = np.linalg.svd(t.reshape(chi_l, d * chi_r), full_matrices=False)
        keep = _truncate(s, chi_max, cutoff)
        discarded += float(np.sum(s[keep:] ** 2))
        sites[i] = vh[:keep].reshape(keep, d, chi_r)
        sites[i - 1] = np.tensordot(sites[i - 1], u[:, :keep] * s[:keep], axes=(2, 0))
    err = math.sqrt(discarded) / total if total > 0 else 0.0
    return MPS(sites, canonical_center=0), err


def random_mps(n: int, s: int, chi: int, seed=None, dtype=np.float64) -> MPS:
    """Random chain with i.i.d. standard normal entries and uniform bond ``chi``.

    Complex dtypes draw real and imaginary parts independently.
    """
    if n < 1 or s < 1 or chi < 1:
        raise ValueError("n, s and chi must all be positive")
    rng = np.random.default_rng(seed)
    bonds = [1] + [chi] * (n - 1) + [1]
    sites = []
    for i in range(n):
        shape = (bonds[i], s, bonds[i + 1])
        t = rng.standard_normal(shape)
        if np.issubdtype(dtype, np.complexfloating):
            t = t + 1j * rng.standard_normal(shape)
        sites.append(t.astype(dtype))
    return MPS(sites)


def product_mps(vectors: Sequence[NDArray]) -> MPS:
    """Bond-dimension-one chain from local vectors."""
    return MPS([np.asarray(v).reshape(1, -1, 1) for v in vectors])


def mps_from_dense(vec: NDArray, dims: Sequence[int], cutoff: float = 1e-14, chi_max: int | None = None) -> MPS:
    """Exact (up to ``cutoff``) MPS factorization of a dense vector by successive SVDs."""
    dims = list(dims)
    vec = np.asarray(vec)
    if vec.size != math.prod(dims):
        raise DimensionError(f"vector length {vec.size} does not factor as {dims}")
    sites = []
    rest = vec.reshape(1, -1)
    for d in dims[:-1]:
        chi_l = rest.shape[0]
        mat = rest.reshape(chi_l * d, -1)
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        keep = _truncate(s, chi_max, cutoff)
        sites.append(u[:, :keep].reshape(chi_l, d, keep))
        rest = s[:keep, None] * vh[:keep]
    sites.append(rest.reshape(rest.shape[0], dims[-1], 1))
    return MPS(sites, canonical_center=len(dims) - 1)
