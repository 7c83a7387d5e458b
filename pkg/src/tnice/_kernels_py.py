"""Pure-numpy per-shot kernels.

Shots are grouped by their outcome at the current site so every group is a
single matrix product.
"""

from __future__ import annotations

import numpy as np


def left_step(left: np.ndarray, t: np.ndarray, k: np.ndarray) -> np.ndarray:
    """``out[u] = left[u] @ t[:, k[u], :]``."""
    out = np.empty((left.shape[0], t.shape[2]))
    for kk in range(t.shape[1]):
        idx = np.flatnonzero(k == kk)
        if idx.size:
            out[idx] = left[idx] @ t[:, kk, :]
    return out


def right_step(right: np.ndarray, t: np.ndarray, k: np.ndarray) -> np.ndarray:
    """``out[u] = t[:, k[u], :] @ right[u]``."""
    out = np.empty((right.shape[0], t.shape[0]))
    for kk in range(t.shape[1]):
        idx = np.flatnonzero(k == kk)
        if idx.size:
            out[idx] = right[idx] @ t[:, kk, :].T
    return out


def chain_values(tensors, outcomes: np.ndarray) -> np.ndarray:
    """Contract the chain along each outcome row."""
    v = np.ones((outcomes.shape[0], 1))
    for site, t in enumerate(tensors):
        v = left_step(v, t, outcomes[:, site])
    return v[:, 0].copy()


def moment_blocks(left: np.ndarray, right: np.ndarray, k: np.ndarray, w: np.ndarray, s: int) -> np.ndarray:
    """Weighted Gram matrices of ``left[u] (x) right[u]`` grouped by ``k[u]``."""
    chi_l, chi_r = left.shape[1], right.shape[1]
    side = chi_l * chi_r
    out = np.zeros((s, side, side))
    for kk in range(s):
        idx = np.flatnonzero(k == kk)
        if idx.size:
            x = (left[idx, :, None] * right[idx, None, :]).reshape(idx.size, side)
            out[kk] = x.T @ (w[idx, None] * x)
    return out
