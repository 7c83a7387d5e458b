"""Canonical-dual (classical shadows) estimator in MPS form."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor_core as tc
from .estimator import EstimatorMPS, second_moment
from .observables import ObservableMPS
from .povm import ProductPOVM, dual_matrix

__all__ = ["CanonicalEstimator", "canonical_estimator", "second_moment"]


@dataclass(frozen=True)
class CanonicalEstimator(EstimatorMPS):
    """``omega_k = Tr[O D_k]`` with ``D_k`` the product of canonical duals."""

    source: ObservableMPS | None = field(default=None, compare=False, repr=False)


def canonical_estimator(o: ObservableMPS, p: ProductPOVM) -> CanonicalEstimator:
    """Apply ``<<D_k|`` site by site to the observable MPS.

    The bond dimensions of the result equal those of ``o``. Raises
    :class:`~tnice.povm.InformationalCompletenessError` when a local POVM is
    not informationally complete.
    """
    if p.n != o.n:
        raise tc.DimensionError(f"POVM has {p.n} sites, observable has {o.n}")
    sites = []
    for t, local in zip(o.mps.sites, p.locals):
        d = dual_matrix(local)
        sites.append(np.einsum("aqb,qk->akb", t, d))
    return CanonicalEstimator(tc.MPS(sites), {"init": "canonical"}, source=o)
