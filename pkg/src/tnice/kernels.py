"""Per-shot contraction kernels with a compiled fast path.

The Cython extension is used when it was built and imported cleanly;
otherwise the numpy implementation in ``_kernels_py`` is used. Setting
``TN_ICE_PURE_PYTHON=1`` forces the fallback.

All functions take float64 tensors and int64 outcome indices:

``chain_values(tensors, outcomes)``
    ``omega_k`` for every row of ``outcomes`` (shape ``(U, n)``).
``left_step(left, t, k)`` / ``right_step(right, t, k)``
    Extend per-shot boundary vectors by one site.
``moment_blocks(left, right, k, w, s)``
    ``blocks[q] = sum_{u: k_u = q} w_u (left_u (x) right_u)(left_u (x) right_u)^T``.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

__all__ = ["BACKEND", "chain_values", "left_step", "right_step", "moment_blocks", "backend_module"]

_impl = _kernels_py
BACKEND = "python"
if os.environ.get("TN_ICE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def backend_module(name: str):
    """Return the implementation module for ``"python"`` or ``"cython"``."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")


def _f64(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


def _i64(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.int64)


def chain_values(tensors, outcomes) -> np.ndarray:
    outcomes = _i64(outcomes)
    if outcomes.shape[0] == 0:
        return np.zeros(0)
    return _impl.chain_values([_f64(t) for t in tensors], outcomes)


def left_step(left, t, k) -> np.ndarray:
    return _impl.left_step(_f64(left), _f64(t), _i64(k))


def right_step(right, t, k) -> np.ndarray:
    return _impl.right_step(_f64(right), _f64(t), _i64(k))


def moment_blocks(left, right, k, w, s: int) -> np.ndarray:
    return _impl.moment_blocks(_f64(left), _f64(right), _i64(k), _f64(w), int(s))
