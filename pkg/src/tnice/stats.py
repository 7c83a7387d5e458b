"""Estimates, error bars and concentration guarantees from per-shot coefficients."""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .estimator import EstimatorMPS, estimator_values, reconstruct
from .observables import ObservableMPS
from .povm import EffectMPO
from . import tensor_core as tc
from .states import OutcomeDataset, StateMPS, density_ptm_mps

__all__ = [
    "UninformativeBoundWarning",
    "BiasBoundViolation",
    "EstimateReport",
    "evaluate",
    "sample_mean_report",
    "median_of_means",
    "median_of_means_report",
    "chebyshev_bound",
    "hoeffding_bound",
    "mom_clusters",
    "bias_bound_check",
]

_EVAL_CHUNK = 1 << 16


class UninformativeBoundWarning(UserWarning):
    """The requested accuracy is not larger than the bias bound."""


class BiasBoundViolation(AssertionError):
    """A state whose estimation bias exceeds the penalty."""

    def __init__(self, index: int, bias: float, eps: float):
        super().__init__(f"state {index}: bias {bias:.3e} exceeds penalty {eps:.3e}")
        self.index = index
        self.bias = bias
        self.eps = eps


@dataclass(frozen=True)
class EstimateReport:
    """Summary of one estimation run.

    ``variance`` uses divisor ``S`` and ``stderr = sqrt(variance / S)``.
    ``kind`` is ``"sample_mean"`` or ``"median_of_means"``; for the latter
    ``mean`` holds the median of the cluster means and ``clusters`` the
    number of clusters.
    """

    mean: float
    variance: float
    stderr: float
    S: int
    penalty: float = 0.0
    bound: tuple[float, float] | None = None
    kind: str = "sample_mean"
    clusters: int | None = None
    estimator_id: str = ""
    annotations: dict = field(default_factory=dict)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("TN_ICE_THREADS", "1")))
    except ValueError:
        return 1


def evaluate(est: EstimatorMPS, ds: OutcomeDataset) -> np.ndarray:
    """Per-shot coefficients ``omega_{k_s}`` in shot order."""
    shots = ds.shots
    workers = _threads()
    if workers == 1 or ds.S <= _EVAL_CHUNK:
        return estimator_values(est, ds)
    if list(ds.s) != est.outcome_dims:
        raise tc.DimensionError(f"outcome extents {ds.s} do not match estimator {est.outcome_dims}")
    chunks = [shots[i : i + _EVAL_CHUNK] for i in range(0, ds.S, _EVAL_CHUNK)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda c: estimator_values(est, c), chunks))
    return np.concatenate(parts)


def _stream(stream) -> np.ndarray:
    x = np.asarray(stream, dtype=float).reshape(-1)
    if x.size == 0:
        raise ValueError("empty coefficient stream")
    if not np.all(np.isfinite(x)):
        raise ValueError("coefficient stream contains non-finite values")
    return x


def chebyshev_bound(var: float, S: int, eps: float, delta: float) -> float:
    """``min(1, Var / (delta^2 S) + eps^2 / delta^2)``.

    Bounds the probability that the sample mean of an estimator with bias
    at most ``eps`` misses the true value by ``delta`` or more. Warns when
    ``delta <= eps``, where the bound carries no information.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if S < 1:
        raise ValueError("S must be positive")
    if delta <= eps:
        warnings.warn(f"delta={delta} does not exceed the bias bound eps={eps}; bound is uninformative", UninformativeBoundWarning, stacklevel=2)
    return min(1.0, var / (delta * delta * S) + eps * eps / (delta * delta))


def hoeffding_bound(a: float, b: float, S: int, eps: float, delta: float) -> float | None:
    """``2 exp(-2 S (delta - eps)^2 / (b - a)^2)`` for coefficients in ``[a, b]``.

    Returns ``None`` when ``delta <= eps``.
    """
    if b <= a:
        raise ValueError("need a < b")
    if delta <= eps:
        return None
    return min(1.0, 2.0 * math.exp(-2.0 * S * (delta - eps) ** 2 / (b - a) ** 2))


def mom_clusters(delta: float) -> int:
    """Cluster count ``ceil(8 ln(1/delta))`` for failure probability ``delta``."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return max(1, math.ceil(8.0 * math.log(1.0 / delta)))


def _annotate(x: np.ndarray, eps: float, delta: float | None, value_range) -> dict:
    if value_range is None:
        return {}
    a, b = (float(v) for v in value_range)
    note = {"range": [a, b], "observed_in_range": bool(x.min() >= a and x.max() <= b)}
    if delta is not None:
        note["delta"] = float(delta)
        note["value"] = hoeffding_bound(a, b, x.size, eps, delta)
    return {"hoeffding": note}


def sample_mean_report(
    stream,
    eps: float = 0.0,
    delta: float | None = None,
    estimator_id: str = "",
    value_range=None,
) -> EstimateReport:
    """Sample mean, variance (divisor ``S``) and standard error of the mean.

    With ``delta`` the Chebyshev bound is attached. ``value_range = (a, b)``
    adds a Hoeffding annotation; it is only meaningful if every coefficient
    of the estimator is known to lie in that interval.
    """
    x = _stream(stream)
    if x.size < 2:
        raise ValueError("need at least two shots")
    mean = float(np.mean(x))
    var = float(np.mean((x - mean) ** 2))
    S = int(x.size)
    bound = None
    if delta is not None:
        bound = (float(delta), chebyshev_bound(var, S, eps, delta))
    return EstimateReport(
        mean, var, math.sqrt(var / S), S, float(eps), bound, "sample_mean", None, estimator_id, _annotate(x, eps, delta, value_range)
    )


def median_of_means(stream, K: int) -> float:
    """Median of ``K`` contiguous cluster means.

    Each cluster holds ``S // K`` consecutive shots; the trailing
    ``S mod K`` shots are dropped.
    """
    x = _stream(stream)
    if not 1 <= K <= x.size:
        raise ValueError(f"K must lie in [1, {x.size}], got {K}")
    m = x.size // K
    means = x[: m * K].reshape(K, m).mean(axis=1)
    return float(np.median(means))


def median_of_means_report(
    stream,
    K: int,
    eps: float = 0.0,
    delta: float | None = None,
    estimator_id: str = "",
    value_range=None,
) -> EstimateReport:
    """Like :func:`sample_mean_report` with the median of means as point estimate."""
    base = sample_mean_report(stream, eps, delta, estimator_id, value_range)
    return EstimateReport(
        median_of_means(stream, K), base.variance, base.stderr, base.S, base.penalty, base.bound, "median_of_means", int(K), estimator_id, base.annotations
    )


def bias_bound_check(obs: ObservableMPS, est: EstimatorMPS, eff: EffectMPO, states: list[StateMPS], eps: float | None = None) -> float:
    """Largest ``|<O_omega> - <O>|`` over ``states``.

    Raises :class:`BiasBoundViolation` naming the first state whose bias
    exceeds ``eps + 1e-10``; ``eps`` defaults to the estimator's penalty.
    """
    rec = reconstruct(est, eff)
    if eps is None:
        eps = tc.norm(tc.add(obs.mps, tc.scale(rec, -1.0)))
    worst = 0.0
    for i, state in enumerate(states):
        rho = density_ptm_mps(state)
        bias = abs(float(tc.inner(rho, rec)) - float(tc.inner(rho, obs.mps)))
        if bias > eps + 1e-10:
            raise BiasBoundViolation(i, bias, eps)
        worst = max(worst, bias)
    return worst
