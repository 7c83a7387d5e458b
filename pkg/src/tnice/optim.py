"""Penalty-regularized variance minimization of an estimator MPS.

The cost

    L(omega) = (1 - lam) <<omega|P|omega>>
               + lam (<<omega|Pi^T Pi|omega>> - 2 <<omega|Pi^T|O>>)

is quadratic in every single site tensor, so it is minimized by sweeping
over the chain and solving one small linear system per site::

    [(1 - lam)(A + A^T) + lam (B + B^T)] x = 2 lam Re v

``A``, ``B`` and ``v`` are the environments of the three networks around
the site. ``A`` is block diagonal in the local outcome index, ``B`` is a
Kronecker product for product POVMs. Small systems are solved densely;
larger ones by preconditioned conjugate gradients using the exact inverse
of the ``B`` part as preconditioner.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from . import kernels
from . import tensor_core as tc
from .estimator import EstimatorMPS, cost as global_cost, second_moment, weighted_left, weighted_right
from .observables import ObservableMPS
from .povm import EffectMPO, ProductPOVM, effect_mpo
from .shadows import canonical_estimator
from .states import EmpiricalModel, ExactModel

__all__ = [
    "NumericalError",
    "Init",
    "EarlyStop",
    "OptimizerConfig",
    "TraceRecord",
    "TrainTrace",
    "LocalProblem",
    "environments",
    "local_solve",
    "sweep",
    "initial_estimator",
    "optimize",
    "scan_bond_dimensions",
    "target_bonds",
]


class NumericalError(RuntimeError):
    """A local solve produced non-finite values."""


@dataclass(frozen=True)
class Init:
    """Starting point of the optimization.

    ``kind`` is ``"random"``, ``"canonical"`` or ``"perturbed"``. For
    ``"perturbed"`` each site tensor of the canonical estimator receives
    Gaussian noise with standard deviation ``sigma`` times that tensor's
    root-mean-square entry.
    """

    kind: str = "random"
    seed: int | None = 0
    sigma: float = 0.1

    def __post_init__(self):
        if self.kind not in ("random", "canonical", "perturbed"):
            raise ValueError(f"unknown init {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    @classmethod
    def random(cls, seed: int | None = 0) -> Init:
        return cls("random", seed)

    @classmethod
    def canonical(cls) -> Init:
        return cls("canonical", None)

    @classmethod
    def perturbed(cls, sigma: float = 0.1, seed: int | None = 0) -> Init:
        return cls("perturbed", seed, sigma)


@dataclass(frozen=True)
class EarlyStop:
    """Stop when the test-set second moment rises for ``patience`` sweeps in a row.

    Only sweep ends whose penalty is at most ``penalty_tol`` (when given)
    are candidates for the returned best-on-test iterate.
    """

    test: EmpiricalModel
    patience: int = 2
    penalty_tol: float | None = None

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be at least 1")


@dataclass(frozen=True)
class OptimizerConfig:
    lam: float = 0.999
    chi_max: int = 8
    max_sweeps: int = 10
    alpha: float | None = None
    tau: float = 1e-10
    tol: float = 1e-10
    init: Init | None = None
    early_stop: EarlyStop | None = None
    dense_max: int = 3072
    cg_rtol: float = 1e-10
    cg_maxiter: int = 5000

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ValueError("lam must lie in (0, 1)")
        if self.chi_max < 1:
            raise ValueError("chi_max must be positive")
        if self.max_sweeps < 0:
            raise ValueError("max_sweeps must be non-negative")
        if self.alpha is not None and not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.tau < 0:
            raise ValueError("tau must be non-negative")
        if self.tol < 0:
            raise ValueError("tol must be non-negative")

    def resolved_alpha(self, pm) -> float:
        if self.alpha is not None:
            return self.alpha
        return 0.3 if isinstance(pm, EmpiricalModel) else 1.0

    def resolved_init(self, pm) -> Init:
        if self.init is not None:
            return self.init
        if isinstance(pm, EmpiricalModel) and pm.S < 100_000:
            return Init.canonical()
        return Init.random(0)


@dataclass(frozen=True)
class TraceRecord:
    sweep: int
    site: int
    second_moment: float
    penalty: float
    cost: float
    test_second_moment: float | None = None


@dataclass
class TrainTrace:
    """One record per local update plus the values of the starting point."""

    records: list[TraceRecord] = field(default_factory=list)
    initial: TraceRecord | None = None
    sweeps: int = 0
    stop_reason: str = "max_sweeps"
    best_sweep: int | None = None

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def final(self) -> TraceRecord | None:
        return self.records[-1] if self.records else self.initial


# ---------------------------------------------------------------- environments


def _gram_mpo(eff: EffectMPO) -> list[np.ndarray]:
    """Sites of ``Pi^T Pi`` as tensors ``(D^2, s, s, D^2)``."""
    out = []
    for t in eff.mpo.sites:
        w = np.einsum("dqke,fqlg->dfkleg", t, t)
        dl, fl, s, _, el, gl = w.shape
        out.append(w.reshape(dl * fl, s, s, el * gl))
    return out


@dataclass
class LocalProblem:
    """Environments of one site.

    Vectors are indexed ``(a, k, b)`` with ``a``/``b`` the left/right bonds.
    ``a_blocks[k]`` is the ``(a, b) x (a', b')`` block of ``A`` at outcome
    ``k``; ``B`` is ``sum b_left[a,c,a'] b_site[c,k,k',d] b_right[b,d,b']``.
    """

    shape: tuple[int, int, int]
    a_blocks: np.ndarray
    b_left: np.ndarray
    b_site: np.ndarray
    b_right: np.ndarray
    v: np.ndarray

    @property
    def side(self) -> int:
        return math.prod(self.shape)

    def dense(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(A, B, v)`` as explicit arrays in ``(a, k, b)`` order."""
        cl, s, cr = self.shape
        a = np.zeros((cl, s, cr, cl, s, cr))
        for k in range(s):
            a[:, k, :, :, k, :] = self.a_blocks[k].reshape(cl, cr, cl, cr)
        b = np.einsum("xcy,ckld,bdz->xkbylz", self.b_left, self.b_site, self.b_right, optimize=True)
        n = self.side
        return a.reshape(n, n), b.reshape(n, n), self.v.reshape(n)

    def matvec_a(self, x: np.ndarray) -> np.ndarray:
        cl, s, cr = self.shape
        xk = x.reshape(cl, s, cr).transpose(1, 0, 2).reshape(s, cl * cr)
        yk = np.einsum("kij,kj->ki", self.a_blocks, xk)
        return yk.reshape(s, cl, cr).transpose(1, 0, 2).reshape(-1)

    def matvec_b(self, x: np.ndarray) -> np.ndarray:
        x = x.reshape(self.shape)
        y = np.einsum("xcy,ckld,bdz,ylz->xkb", self.b_left, self.b_site, self.b_right, x, optimize=True)
        return y.reshape(-1)

    def diag_a(self) -> np.ndarray:
        cl, s, cr = self.shape
        d = np.einsum("kii->ki", self.a_blocks).reshape(s, cl, cr)
        return d.transpose(1, 0, 2).reshape(-1)

    def diag_b(self) -> np.ndarray:
        d = np.einsum("xcx,ckkd,bdb->xkb", self.b_left, self.b_site, self.b_right, optimize=True)
        return d.reshape(-1)


class _Environments:
    """Cached left/right partial contractions of the three cost networks."""

    def __init__(self, sites: list[np.ndarray], eff: EffectMPO, obs: ObservableMPS, pm):
        self.sites = sites
        self.n = len(sites)
        self.pm = pm
        self.eff_sites = list(eff.mpo.sites)
        self.gram = _gram_mpo(eff)
        self.obs_sites = list(obs.mps.sites)
        self.exact = isinstance(pm, ExactModel)
        if not self.exact and not isinstance(pm, EmpiricalModel):
            raise TypeError(f"unsupported probability model {type(pm).__name__}")
        n = self.n
        self.la: list = [None] * (n + 1)
        self.ra: list = [None] * (n + 1)
        self.lb: list = [None] * (n + 1)
        self.rb: list = [None] * (n + 1)
        self.lv: list = [None] * (n + 1)
        self.rv: list = [None] * (n + 1)
        if self.exact:
            self.p_sites = list(pm.p.sites)
            self.la[0] = np.ones((1, 1, 1))
            self.ra[n] = np.ones((1, 1, 1))
        else:
            self.k = np.ascontiguousarray(pm.outcomes.T)
            self.w = pm.counts / pm.S
            u = pm.outcomes.shape[0]
            self.la[0] = np.ones((u, 1))
            self.ra[n] = np.ones((u, 1))
        self.lb[0] = np.ones((1, 1, 1))
        self.rb[n] = np.ones((1, 1, 1))
        self.lv[0] = np.ones((1, 1, 1))
        self.rv[n] = np.ones((1, 1, 1))

    def push_left(self, i: int) -> None:
        """Left environments at bond ``i + 1`` from bond ``i`` and site ``i``."""
        t = self.sites[i]
        if self.exact:
            self.la[i + 1] = weighted_left(self.la[i], t, self.p_sites[i])
        else:
            self.la[i + 1] = kernels.left_step(self.la[i], t, self.k[i])
        self.lb[i + 1] = np.einsum("xcy,xkb,ckld,ylz->bdz", self.lb[i], t, self.gram[i], t, optimize=True)
        self.lv[i + 1] = np.einsum("ocx,oqp,cqkd,xkb->pdb", self.lv[i], self.obs_sites[i], self.eff_sites[i], t, optimize=True)

    def push_right(self, i: int) -> None:
        """Right environments at bond ``i`` from bond ``i + 1`` and site ``i``."""
        t = self.sites[i]
        if self.exact:
            self.ra[i] = weighted_right(self.ra[i + 1], t, self.p_sites[i])
        else:
            self.ra[i] = kernels.right_step(self.ra[i + 1], t, self.k[i])
        self.rb[i] = np.einsum("bdz,xkb,ckld,ylz->xcy", self.rb[i + 1], t, self.gram[i], t, optimize=True)
        self.rv[i] = np.einsum("pdb,oqp,cqkd,xkb->ocx", self.rv[i + 1], self.obs_sites[i], self.eff_sites[i], t, optimize=True)

    def build_left(self, upto: int) -> None:
        for i in range(upto):
            self.push_left(i)

    def build_right(self, downto: int) -> None:
        for i in range(self.n - 1, downto - 1, -1):
            self.push_right(i)

    def problem(self, i: int) -> LocalProblem:
        t = self.sites[i]
        cl, s, cr = t.shape
        if self.exact:
            t1 = np.tensordot(self.la[i], self.p_sites[i], axes=(1, 0))  # (x, y, k, d)
            blocks = np.tensordot(t1, self.ra[i + 1], axes=(3, 1))  # (x, y, k, b, z)
            blocks = blocks.transpose(2, 0, 3, 1, 4).reshape(s, cl * cr, cl * cr)
        else:
            blocks = kernels.moment_blocks(self.la[i], self.ra[i + 1], self.k[i], self.w, s)
        blocks = 0.5 * (blocks + blocks.transpose(0, 2, 1))
        v = np.einsum("ocx,oqp,cqkd,pdb->xkb", self.lv[i], self.obs_sites[i], self.eff_sites[i], self.rv[i + 1], optimize=True)
        return LocalProblem((cl, s, cr), blocks, self.lb[i], self.gram[i], self.rb[i + 1], v)


def _check_compat(est: EstimatorMPS, eff: EffectMPO, obs: ObservableMPS, pm) -> None:
    if not (est.n == eff.n == obs.n == pm.n):
        raise tc.DimensionError(f"site counts differ: estimator {est.n}, effects {eff.n}, observable {obs.n}, model {pm.n}")
    if est.outcome_dims != eff.outcome_dims or list(pm.outcome_dims) != est.outcome_dims:
        raise tc.DimensionError("outcome extents of estimator, effects and probability model differ")
    d2 = [t.shape[1] for t in eff.mpo.sites]
    if d2 != obs.mps.physical_dims:
        raise tc.DimensionError("effect and observable operator-space extents differ")


def environments(est: EstimatorMPS, eff: EffectMPO, obs: ObservableMPS, pm, site: int) -> LocalProblem:
    """Environments ``A``, ``B``, ``v`` of ``site``; the estimator must be centered there."""
    _check_compat(est, eff, obs, pm)
    if est.mps.canonical_center != site:
        raise ValueError(f"estimator canonical center is {est.mps.canonical_center}, expected {site}")
    envs = _Environments([np.asarray(t, dtype=float) for t in est.mps.sites], eff, obs, pm)
    envs.build_left(site)
    envs.build_right(site + 1)
    return envs.problem(site)


# ---------------------------------------------------------------- local solve


def _check_finite(x: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"non-finite entries in {what}")


def _dense_solve(m: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            return scipy.linalg.solve(m, rhs, assume_a="pos", check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning):
        return scipy.linalg.lstsq(m, rhs, cond=1e-14, check_finite=False)[0]


def local_solve(a: np.ndarray, b: np.ndarray, v: np.ndarray, lam: float, tau: float, shape=None) -> np.ndarray:
    """Solve ``(M + tau mean(diag M) I) x = 2 lam Re v`` with ``M = (1-lam)(A+A^T) + lam(B+B^T)``.

    A failed Cholesky factorization (the system is only positive
    semidefinite) falls back to a least-squares solution. The result is
    reshaped to ``shape`` when given.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    v = np.asarray(v)
    for arr, name in ((a, "A"), (b, "B"), (v, "v")):
        _check_finite(arr, name)
    if a.shape != b.shape or a.shape[0] != a.shape[1] or a.shape[0] != v.size:
        raise tc.DimensionError(f"incompatible local system shapes {a.shape}, {b.shape}, {v.shape}")
    m = (1.0 - lam) * (a + a.T) + lam * (b + b.T)
    if tau > 0:
        m = m + tau * np.mean(np.diag(m)) * np.eye(m.shape[0])
    x = _dense_solve(m, 2.0 * lam * np.real(v).reshape(-1))
    _check_finite(x, "local solution")
    return x.reshape(shape) if shape is not None else x


class _KronPreconditioner:
    """Exact inverse of ``c_b B + sigma I`` for ``B = L (x) G (x) R``."""

    def __init__(self, prob: LocalProblem, c_b: float, sigma: float):
        self.shape = prob.shape
        el, self.ul = np.linalg.eigh(0.5 * (prob.b_left[:, 0, :] + prob.b_left[:, 0, :].T))
        eg, self.ug = np.linalg.eigh(0.5 * (prob.b_site[0, :, :, 0] + prob.b_site[0, :, :, 0].T))
        er, self.ur = np.linalg.eigh(0.5 * (prob.b_right[:, 0, :] + prob.b_right[:, 0, :].T))
        lam = c_b * np.einsum("a,k,b->akb", el, eg, er) + sigma
        self.inv = 1.0 / np.maximum(lam, sigma)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = x.reshape(self.shape)
        y = np.einsum("xa,kl,zb,xkz->alb", self.ul, self.ug, self.ur, x, optimize=True)
        y = y * self.inv
        return np.einsum("ax,kl,bz,xlz->akb", self.ul, self.ug, self.ur, y, optimize=True).reshape(-1)


def _solve_problem(prob: LocalProblem, lam: float, tau: float, x0: np.ndarray, cfg: OptimizerConfig) -> np.ndarray:
    if prob.side <= cfg.dense_max:
        a, b, v = prob.dense()
        return local_solve(a, b, v, lam, tau, prob.shape)
    # Iterative path; A and B are already symmetric.
    c_a, c_b = 2.0 * (1.0 - lam), 2.0 * lam
    diag = c_a * prob.diag_a() + c_b * prob.diag_b()
    shift = tau * float(np.mean(diag))
    n = prob.side

    def mv(x):
        return c_a * prob.matvec_a(x) + c_b * prob.matvec_b(x) + shift * x

    op = spla.LinearOperator((n, n), matvec=mv, dtype=float)
    sigma = c_a * float(np.mean(prob.diag_a())) + shift
    sigma = max(sigma, 1e-14 * float(np.max(diag)))
    if prob.b_site.shape[0] == 1 and prob.b_site.shape[3] == 1:
        pre = _KronPreconditioner(prob, c_b, sigma)
        m_op = spla.LinearOperator((n, n), matvec=pre, dtype=float)
    else:
        inv = 1.0 / np.maximum(diag + shift, sigma)
        m_op = spla.LinearOperator((n, n), matvec=lambda x: inv * x, dtype=float)
    rhs = 2.0 * lam * np.real(prob.v).reshape(-1)
    x, _ = spla.cg(op, rhs, x0=x0.reshape(-1), rtol=cfg.cg_rtol, atol=0.0, maxiter=cfg.cg_maxiter, M=m_op)
    _check_finite(x, "local solution")
    return x.reshape(prob.shape)


# ---------------------------------------------------------------- initialization


def target_bonds(dims: list[int], chi_max: int) -> list[int]:
    """Bond extents ``min(chi_max, prod(left dims), prod(right dims))``, boundaries included."""
    n = len(dims)
    out = []
    for j in range(n + 1):
        left = math.prod(dims[:j])
        right = math.prod(dims[j:])
        out.append(int(min(chi_max, left, right)))
    return out


def _pad(m: tc.MPS, bonds: list[int], seed: int = 0) -> tc.MPS:
    """Grow bonds to ``bonds`` without changing the represented vector.

    New columns are zero and new rows are random. Every path through a new
    bond index would have to start at a new column of site 0, so the vector
    is unchanged, yet the environments see the new directions and single-site
    updates can fill them (zero rows would be a stationary trap).
    """
    rng = np.random.default_rng(seed)
    sites = []
    for i, t in enumerate(m.sites):
        cl, s, cr = t.shape
        out = np.zeros((max(cl, bonds[i]), s, max(cr, bonds[i + 1])), dtype=t.dtype)
        out[:cl, :, :cr] = t
        if out.shape[0] > cl:
            rms = math.sqrt(float(np.mean(np.abs(t) ** 2))) or 1.0
            out[cl:] = rms * rng.standard_normal(out[cl:].shape)
        sites.append(out)
    return tc.MPS(sites)


def _fit_bonds(m: tc.MPS, chi_max: int) -> tc.MPS:
    if max(m.bond_dims) > chi_max:
        m, _ = tc.compress(m, chi_max=chi_max, cutoff=0.0)
    return _pad(m, target_bonds(m.physical_dims, chi_max))


def initial_estimator(obs: ObservableMPS, povm: ProductPOVM, init: Init, chi_max: int) -> EstimatorMPS:
    """Starting estimator for ``init``.

    The canonical start keeps the observable's bonds; random and perturbed
    starts use the full target bonds for ``chi_max``.
    """
    if init.kind == "canonical":
        c = canonical_estimator(obs, povm)
        return EstimatorMPS(c.mps, {"init": "canonical"})
    dims = povm.outcome_dims
    bonds = target_bonds(dims, chi_max)
    rng = np.random.default_rng(init.seed)
    if init.kind == "random":
        sites = [rng.standard_normal((bonds[i], dims[i], bonds[i + 1])) for i in range(len(dims))]
        m = tc.canonize(tc.MPS(sites), 0)
        m = tc.scale(m, 1.0 / np.linalg.norm(m.sites[0]))
        return EstimatorMPS(m, {"init": "random", "seed": init.seed})
    c = _fit_bonds(canonical_estimator(obs, povm).mps, chi_max)
    sites = []
    for t in c.sites:
        rms = math.sqrt(float(np.mean(t * t))) or 1.0
        sites.append(t + init.sigma * rms * rng.standard_normal(t.shape))
    return EstimatorMPS(tc.MPS(sites), {"init": "perturbed", "sigma": init.sigma, "seed": init.seed})


# ---------------------------------------------------------------- sweeping


def _evaluate(sites, eff, obs, pm, lam, test) -> TraceRecord:
    est = EstimatorMPS(tc.MPS(sites))
    total, sm, pen = global_cost(est, eff, obs, pm, lam)
    tsm = second_moment(est, test) if test is not None else None
    return TraceRecord(0, -1, sm, pen, total, tsm)


def sweep(
    est: EstimatorMPS,
    eff: EffectMPO,
    obs: ObservableMPS,
    pm,
    cfg: OptimizerConfig,
    callback: Callable[[TraceRecord], None] | None = None,
) -> tuple[EstimatorMPS, TrainTrace]:
    """Run alternating left-to-right and right-to-left passes of local solves.

    One sweep updates sites ``0 .. n-2`` moving right, then ``n-1 .. 1``
    moving left. After each local solve the site becomes
    ``alpha * x + (1 - alpha) * old`` and the global second moment,
    penalty and cost are recorded.

    Stops after ``cfg.max_sweeps`` sweeps, when the cost (with the constant
    ``lam ||O||^2`` restored) changes by less than ``cfg.tol`` relative over
    a sweep, or when early stopping triggers. With early stopping
    configured the best eligible sweep end on the test set is returned.
    """
    _check_compat(est, eff, obs, pm)
    trace = TrainTrace()
    test = cfg.early_stop.test if cfg.early_stop is not None else None
    lam = cfg.lam
    alpha = cfg.resolved_alpha(pm)
    const = lam * obs.norm2**2
    if cfg.max_sweeps == 0:
        trace.initial = _evaluate(list(est.mps.sites), eff, obs, pm, lam, test)
        return est, trace

    m = tc.canonize(_fit_bonds(est.mps.astype(float), cfg.chi_max), 0)
    sites = list(m.sites)
    n = len(sites)
    envs = _Environments(sites, eff, obs, pm)
    envs.build_right(1)
    start = _evaluate(sites, eff, obs, pm, lam, test)
    trace.initial = start

    best_sites, best_val, bad = None, math.inf, 0
    prev_test = start.test_second_moment
    es = cfg.early_stop

    def eligible(rec: TraceRecord) -> bool:
        return es.penalty_tol is None or rec.penalty <= es.penalty_tol

    if es is not None and eligible(start):
        best_sites, best_val, trace.best_sweep = list(sites), start.test_second_moment, 0

    def update(sw: int, i: int, direction: int) -> TraceRecord:
        prob = envs.problem(i)
        old = sites[i]
        try:
            x = _solve_problem(prob, lam, cfg.tau, old, cfg)
        except NumericalError as exc:
            raise NumericalError(f"sweep {sw}, site {i}: {exc}") from None
        new = alpha * x + (1.0 - alpha) * old if alpha < 1.0 else x
        if direction > 0 and i < n - 1:
            q, r = tc._left_qr(new)
            sites[i] = q
            sites[i + 1] = np.tensordot(r, sites[i + 1], axes=(1, 0))
            envs.push_left(i)
        elif direction < 0 and i > 0:
            q, r = tc._right_qr(new)
            sites[i] = q
            sites[i - 1] = np.tensordot(sites[i - 1], r, axes=(2, 0))
            envs.push_right(i)
        else:
            sites[i] = new
        rec = _evaluate(sites, eff, obs, pm, lam, test)
        rec = TraceRecord(sw, i, rec.second_moment, rec.penalty, rec.cost, rec.test_second_moment)
        trace.records.append(rec)
        if callback is not None:
            callback(rec)
        return rec

    last = start
    for sw in range(1, cfg.max_sweeps + 1):
        if n == 1:
            rec = update(sw, 0, +1)
        else:
            for i in range(0, n - 1):
                rec = update(sw, i, +1)
            for i in range(n - 1, 0, -1):
                rec = update(sw, i, -1)
        trace.sweeps = sw
        if es is not None:
            if eligible(rec) and rec.test_second_moment < best_val:
                best_sites, best_val, trace.best_sweep = list(sites), rec.test_second_moment, sw
            bad = bad + 1 if rec.test_second_moment > prev_test else 0
            prev_test = rec.test_second_moment
            if bad >= es.patience:
                trace.stop_reason = "early_stop"
                break
        scale = max(last.cost + const, 1e-300)
        if abs(rec.cost - last.cost) <= cfg.tol * scale:
            trace.stop_reason = "tol"
            break
        last = rec

    final_sites = sites
    if es is not None and best_sites is not None:
        final_sites = best_sites
    center = 0 if final_sites is sites or n == 1 else None
    out = tc.MPS(final_sites, canonical_center=center)
    meta = dict(est.meta)
    meta.update({"lam": lam, "chi_max": cfg.chi_max, "alpha": alpha, "tau": cfg.tau, "sweeps": trace.sweeps})
    return EstimatorMPS(out, meta), trace


def optimize(
    obs: ObservableMPS,
    povm: ProductPOVM,
    pm,
    cfg: OptimizerConfig,
    start: EstimatorMPS | None = None,
    callback: Callable[[TraceRecord], None] | None = None,
) -> tuple[EstimatorMPS, TrainTrace]:
    """Build the starting estimator from ``cfg`` (unless given) and sweep."""
    eff = effect_mpo(povm)
    if start is None:
        init = cfg.resolved_init(pm)
        start = initial_estimator(obs, povm, init, cfg.chi_max)
    return sweep(start, eff, obs, pm, cfg, callback)


def scan_bond_dimensions(obs: ObservableMPS, povm: ProductPOVM, pm, chis, cfg: OptimizerConfig, warm_start: bool = True):
    """Optimize at each bond dimension in ``chis`` (ascending).

    With ``warm_start`` every run after the first starts from the previous
    result, grown to the larger bond dimension without changing
    its values.
    """
    results = []
    prev = None
    for chi in chis:
        c = OptimizerConfig(**{**cfg.__dict__, "chi_max": int(chi)})
        est, trace = optimize(obs, povm, pm, c, start=prev if warm_start else None)
        results.append((int(chi), est, trace))
        prev = est
    return results
