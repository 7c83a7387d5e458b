"""``tn-ice`` command-line interface.

Subcommands: ``sample``, ``baseline``, ``optimize``, ``estimate``, ``compare``.
Exit codes: 0 success, 2 usage error, 3 data mismatch, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import io as tio
from . import tensor_core as tc
from .estimator import EstimatorMPS, mean as exact_mean, penalty as est_penalty, second_moment
from .observables import (
    HamiltonianParseError,
    PauliSum,
    ZeroObservableError,
    apply_pauli_sum,
    expectation_dense,
    parity_observable,
    parse_hamiltonian,
    to_mps,
)
from .optim import EarlyStop, Init, NumericalError, OptimizerConfig, optimize, scan_bond_dimensions
from .povm import ProductPOVM, effect_mpo, pauli6
from .shadows import canonical_estimator
from .states import (
    StateMPS,
    empirical_model,
    exact_model,
    ghz,
    ground_state_dense,
    product_state,
    random_state,
    sample,
    zero_state,
)
from .stats import evaluate, median_of_means_report, sample_mean_report

__all__ = ["main", "build_parser", "RunConfig", "UsageError", "DataMismatch"]

EXIT_OK, EXIT_USAGE, EXIT_MISMATCH, EXIT_NUMERICAL = 0, 2, 3, 4


class UsageError(Exception):
    pass


class DataMismatch(Exception):
    pass


@dataclass
class RunConfig:
    """Everything one command needs, validated before any work starts."""

    n: int | None = None
    state: str | None = None
    state_seed: int = 0
    state_chi: int = 2
    hamiltonian: str | None = None
    observable: str | None = None
    preset: str | None = None
    povm: str = "pauli6"
    mode: str = "exact"
    train: str | None = None
    test: str | None = None
    optimizer: OptimizerConfig | None = None
    chis: list[int] = field(default_factory=list)
    out: str | None = None
    trace: str | None = None
    trace_stride: int = 1
    seed: int | None = None

    def validate(self) -> None:
        for path in (self.hamiltonian, self.observable, self.train, self.test):
            if path is not None and not Path(path).is_file():
                raise UsageError(f"file not found: {path}")
        if self.povm != "pauli6" and not Path(self.povm).is_file():
            raise UsageError(f"POVM must be 'pauli6' or a povm-v1 file, got {self.povm!r}")
        if self.mode not in ("exact", "empirical"):
            raise UsageError(f"unknown mode {self.mode!r}")
        if self.mode == "empirical" and self.train is None:
            raise UsageError("empirical mode needs --train")
        if self.state == "ground" and self.hamiltonian is None and self.observable is None:
            raise UsageError("--state ground needs --hamiltonian (or --observable)")
        if self.trace_stride < 1:
            raise UsageError("--trace-stride must be positive")


# ---------------------------------------------------------------- problem setup


def _read_pauli_sum(path: str) -> PauliSum:
    return parse_hamiltonian(Path(path).read_text(encoding="utf-8"))


def load_povm(spec: str, n: int) -> ProductPOVM:
    if spec == "pauli6":
        return ProductPOVM.uniform(pauli6(), n)
    p = tio.read_povm(spec)
    if p.n != n:
        raise DataMismatch(f"POVM file has {p.n} sites, problem has {n}")
    return p


def build_state(cfg: RunConfig) -> StateMPS:
    n = cfg.n
    if cfg.state == "ghz":
        return ghz(n)
    if cfg.state == "zero":
        return zero_state(n)
    if cfg.state == "plus":
        return product_state([[1, 1]] * n)
    if cfg.state == "random":
        return random_state(n, cfg.state_chi, seed=cfg.state_seed)
    if cfg.state == "ground":
        h = _read_pauli_sum(cfg.hamiltonian or cfg.observable)
        if h.n != n:
            raise DataMismatch(f"Hamiltonian acts on {h.n} qubits, --n is {n}")
        return ground_state_dense(h)
    raise UsageError(f"unknown state {cfg.state!r}")


def build_observable(cfg: RunConfig) -> PauliSum:
    if cfg.observable is not None:
        o = _read_pauli_sum(cfg.observable)
        if cfg.n is not None and o.n != cfg.n:
            raise DataMismatch(f"observable acts on {o.n} qubits, --n is {cfg.n}")
        return o
    if cfg.preset in ("ghz", "parity"):
        return parity_observable(cfg.n)
    if cfg.hamiltonian is not None:
        return _read_pauli_sum(cfg.hamiltonian)
    raise UsageError("need --observable, --hamiltonian or --preset")


def _chis(text: str) -> list[int]:
    try:
        out = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad bond-dimension list {text!r}") from None
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError("bond dimensions must be positive integers")
    return out


def _range(text: str) -> tuple[float, float]:
    try:
        a, b = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected 'a,b'") from None
    return a, b


# ---------------------------------------------------------------- commands


def _emit(text: str, out: str | None) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def cmd_sample(args) -> int:
    cfg = RunConfig(n=args.n, state=args.state, state_seed=args.state_seed, state_chi=args.state_chi, hamiltonian=args.hamiltonian, povm=args.povm, seed=args.seed, out=args.out)
    cfg.validate()
    state = build_state(cfg)
    povm = load_povm(cfg.povm, cfg.n)
    ds = sample(state, povm, args.shots, args.seed)
    _emit(tio.dataset_to_text(ds), cfg.out)
    summary = f"S={ds.S} n={ds.n} seed={ds.seed}\n"
    (sys.stderr if cfg.out in (None, "-") else sys.stdout).write(summary)
    return EXIT_OK


def _est_meta(est: EstimatorMPS, pen: float) -> EstimatorMPS:
    meta = dict(est.meta)
    meta["penalty"] = pen
    return EstimatorMPS(est.mps, meta)


def cmd_baseline(args) -> int:
    cfg = RunConfig(n=args.n, observable=args.observable, preset=args.preset, povm=args.povm, out=args.out)
    cfg.validate()
    o = build_observable(cfg)
    cfg.n = o.n
    povm = load_povm(cfg.povm, o.n)
    obs = to_mps(o)
    est = canonical_estimator(obs, povm)
    est = EstimatorMPS(est.mps, dict(est.meta))
    pen = est_penalty(est, effect_mpo(povm), obs)
    _emit(tio.estimator_to_json(_est_meta(est, pen)), cfg.out)
    return EXIT_OK


def _optimizer_config(args, chi: int, test_model) -> OptimizerConfig:
    init = None
    if args.init == "random":
        init = Init.random(args.init_seed)
    elif args.init == "canonical":
        init = Init.canonical()
    elif args.init == "perturbed":
        init = Init.perturbed(args.sigma, args.init_seed)
    es = None
    if test_model is not None:
        es = EarlyStop(test_model, patience=args.patience, penalty_tol=args.penalty_tol)
    return OptimizerConfig(
        lam=args.lam,
        chi_max=chi,
        max_sweeps=args.sweeps,
        alpha=args.alpha,
        tau=args.tau,
        tol=args.tol,
        init=init,
        early_stop=es,
    )


def _suffixed(path: str, chi: int) -> str:
    p = Path(path)
    return str(p.with_name(f"{p.stem}_chi{chi}{p.suffix}"))


def _thin(trace, stride: int):
    """Keep every ``stride``-th local update and always the last one."""
    if stride == 1:
        return trace
    keep = [r for i, r in enumerate(trace.records) if (i + 1) % stride == 0 or i == len(trace.records) - 1]
    return replace(trace, records=keep)


def cmd_optimize(args) -> int:
    preset = args.preset
    state = args.state
    if preset == "ghz":
        state = state or "ghz"
    cfg = RunConfig(
        n=args.n,
        state=state,
        state_seed=args.state_seed,
        state_chi=args.state_chi,
        hamiltonian=args.hamiltonian,
        observable=args.observable,
        preset=preset,
        povm=args.povm,
        mode=args.mode,
        train=args.train,
        test=args.test,
        chis=args.chi,
        out=args.out,
        trace=args.trace,
        trace_stride=args.trace_stride,
    )
    cfg.validate()
    if len(cfg.chis) > 1 and not args.scan:
        raise UsageError("several bond dimensions given; add --scan")
    o = build_observable(cfg)
    cfg.n = o.n
    povm = load_povm(cfg.povm, o.n)
    obs = to_mps(o)
    test_model = None
    if cfg.mode == "exact":
        if cfg.state is None:
            raise UsageError("exact mode needs --state (or --preset ghz)")
        pm = exact_model(build_state(cfg), povm)
    else:
        train = tio.read_dataset(cfg.train)
        _check_dataset(train, o.n, povm.outcome_dims, cfg.train)
        pm = empirical_model(train)
        if cfg.test is not None:
            test = tio.read_dataset(cfg.test)
            _check_dataset(test, o.n, povm.outcome_dims, cfg.test)
            test_model = empirical_model(test)
    eff = effect_mpo(povm)

    if args.scan:
        base = _optimizer_config(args, cfg.chis[0], test_model)
        results = scan_bond_dimensions(obs, povm, pm, cfg.chis, base, warm_start=not args.cold)
        rows = []
        for chi, est, trace in results:
            pen = est_penalty(est, eff, obs)
            sm = second_moment(est, pm)
            rows.append((chi, sm, pen, trace.final().cost))
            if cfg.out is not None:
                tio.write_estimator(_suffixed(cfg.out, chi), _est_meta(est, pen))
            if cfg.trace is not None:
                tio.write_trace(_suffixed(cfg.trace, chi), _thin(trace, cfg.trace_stride))
        buf = ["chi,second_moment,penalty,cost\n"] + [f"{c},{sm!r},{pen!r},{cost!r}\n" for c, sm, pen, cost in rows]
        summary = "".join(buf)
        if cfg.out is not None:
            p = Path(cfg.out)
            with open(p.with_name(f"{p.stem}_scan.csv"), "w", encoding="utf-8", newline="\n") as fh:
                fh.write(summary)
        sys.stdout.write(summary)
        return EXIT_OK

    ocfg = _optimizer_config(args, cfg.chis[0], test_model)
    est, trace = optimize(obs, povm, pm, ocfg)
    pen = est_penalty(est, eff, obs)
    sm = second_moment(est, pm)
    if cfg.out is not None:
        tio.write_estimator(cfg.out, _est_meta(est, pen))
    if cfg.trace is not None:
        tio.write_trace(cfg.trace, _thin(trace, cfg.trace_stride))
    sys.stdout.write(f"sweeps={trace.sweeps} stop={trace.stop_reason} second_moment={sm!r} penalty={pen!r}\n")
    return EXIT_OK


def _check_dataset(ds, n, dims, name) -> None:
    if ds.n != n or list(ds.s) != list(dims):
        raise DataMismatch(f"{name}: dataset has n={ds.n}, s={ds.s}; expected n={n}, s={list(dims)}")


def cmd_estimate(args) -> int:
    est = tio.read_estimator(args.estimator)
    ds = tio.read_dataset(args.dataset)
    if ds.n != est.n or list(ds.s) != est.outcome_dims:
        raise DataMismatch(
            f"estimator has n={est.n}, s={est.outcome_dims}; dataset has n={ds.n}, s={list(ds.s)}"
        )
    eps = args.penalty if args.penalty is not None else float(est.meta.get("penalty", 0.0))
    stream = evaluate(est, ds)
    ident = Path(args.estimator).name
    if args.mom is not None:
        if not 1 <= args.mom <= ds.S:
            raise UsageError(f"--mom must lie in [1, {ds.S}]")
        rep = median_of_means_report(stream, args.mom, eps, args.delta, ident, args.range)
    else:
        rep = sample_mean_report(stream, eps, args.delta, ident, args.range)
    _emit(tio.report_to_json(rep), args.out)
    return EXIT_OK


def cmd_compare(args) -> int:
    preset = args.preset
    state = args.state or ("ghz" if preset == "ghz" else None)
    cfg = RunConfig(n=args.n, state=state, state_seed=args.state_seed, state_chi=args.state_chi, hamiltonian=args.hamiltonian, observable=args.observable, preset=preset, povm=args.povm)
    cfg.validate()
    o = build_observable(cfg)
    cfg.n = o.n
    povm = load_povm(cfg.povm, o.n)
    obs = to_mps(o)
    eff = effect_mpo(povm)
    rows = []
    ds = None
    if args.dataset is not None:
        ds = tio.read_dataset(args.dataset)
        _check_dataset(ds, o.n, povm.outcome_dims, args.dataset)
    pm = None
    psi = None
    if cfg.state is not None:
        st = build_state(cfg)
        pm = exact_model(st, povm)
        if o.n <= 12:
            psi = st.to_dense()
    elif ds is None:
        raise UsageError("compare needs --state or --dataset")

    if psi is not None:
        mu = expectation_dense(o, psi)
        o_psi = apply_pauli_sum(o, psi)
        var = float(np.vdot(o_psi, o_psi).real) - mu * mu
        se = math.sqrt(max(var, 0.0) / ds.S) if ds is not None else ""
        rows.append(("Observable", max(var, 0.0), 0.0, mu, se))

    candidates = [("Canonical", canonical_estimator(obs, povm))]
    for path in args.estimator:
        est = tio.read_estimator(path)
        if est.n != o.n or est.outcome_dims != povm.outcome_dims:
            raise DataMismatch(f"{path}: estimator has n={est.n}, s={est.outcome_dims}")
        candidates.append((args.label or "TN-ICE", est))
    for label, est in candidates:
        pen = est_penalty(est, eff, obs)
        if ds is not None:
            rep = sample_mean_report(evaluate(est, ds), pen)
            rows.append((label, rep.variance, pen, rep.mean, rep.stderr))
        else:
            m = exact_mean(est, pm)
            rows.append((label, second_moment(est, pm) - m * m, pen, m, ""))
    lines = ["estimator,variance,penalty,mean,stderr\n"]
    for label, var, pen, m, se in rows:
        lines.append(f"{label},{var!r},{pen!r},{m!r},{se if se == '' else repr(se)}\n")
    _emit("".join(lines), args.out)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _add_problem(p: argparse.ArgumentParser, need_state: bool = False) -> None:
    p.add_argument("--n", type=int, help="number of qubits")
    p.add_argument("--state", choices=["ghz", "zero", "plus", "ground", "random"], required=need_state)
    p.add_argument("--state-seed", type=int, default=0, help="seed for --state random")
    p.add_argument("--state-chi", type=int, default=2, help="bond dimension for --state random")
    p.add_argument("--hamiltonian", help="Pauli-sum file for --state ground")
    p.add_argument("--povm", default="pauli6", help="'pauli6' or a povm-v1 file")


def _add_observable(p: argparse.ArgumentParser) -> None:
    p.add_argument("--observable", help="Pauli-sum file ('<coefficient> <word>' per line)")
    p.add_argument("--preset", choices=["ghz", "parity"], help="ghz: GHZ state with X^n - Y^n; parity: X^n - Y^n only")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tn-ice", description="Tensor-network estimators for informationally complete measurements.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="simulate measurement shots and write a ds-v1 dataset")
    _add_problem(p, need_state=True)
    p.add_argument("--shots", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default="-", help="output path, '-' for stdout")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("baseline", help="write the canonical-dual estimator as est-v1")
    p.add_argument("--n", type=int)
    p.add_argument("--povm", default="pauli6")
    _add_observable(p)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("optimize", help="train an estimator MPS")
    _add_problem(p)
    _add_observable(p)
    p.add_argument("--mode", choices=["exact", "empirical"], default="exact")
    p.add_argument("--train", help="training dataset (empirical mode)")
    p.add_argument("--test", help="test dataset for early stopping")
    p.add_argument("--chi", type=_chis, default=[8], help="bond dimension, or a comma list with --scan")
    p.add_argument("--scan", action="store_true", help="optimize at every listed bond dimension")
    p.add_argument("--cold", action="store_true", help="with --scan, start every bond dimension from scratch")
    p.add_argument("--lam", type=float, default=0.999)
    p.add_argument("--sweeps", type=int, default=10)
    p.add_argument("--alpha", type=float, default=None, help="smooth-update weight (default 1.0 exact, 0.3 empirical)")
    p.add_argument("--tau", type=float, default=1e-10)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--init", choices=["random", "canonical", "perturbed"], default=None)
    p.add_argument("--init-seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=0.1, help="relative noise for --init perturbed")
    p.add_argument("--patience", type=int, default=2)
    p.add_argument("--penalty-tol", type=float, default=None, help="only sweep ends with penalty below this can be returned by early stopping")
    p.add_argument("--out", help="estimator output path")
    p.add_argument("--trace", help="trace CSV output path")
    p.add_argument("--trace-stride", type=int, default=1, help="write every K-th local update to the trace (the last is always kept)")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("estimate", help="evaluate an estimator on a dataset")
    p.add_argument("--estimator", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--mom", type=int, default=None, help="median of means with K clusters")
    p.add_argument("--delta", type=float, default=None, help="accuracy for the Chebyshev bound")
    p.add_argument("--penalty", type=float, default=None, help="bias bound (default: from the estimator file)")
    p.add_argument("--range", type=_range, default=None, help="'a,b' coefficient range for a Hoeffding annotation")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("compare", help="Observable / Canonical / TN-ICE comparison table")
    _add_problem(p)
    _add_observable(p)
    p.add_argument("--estimator", action="append", default=[], help="trained estimator file (repeatable)")
    p.add_argument("--label", default=None, help="row label for trained estimators")
    p.add_argument("--dataset", help="evaluate on this dataset instead of exact probabilities")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, FileNotFoundError, HamiltonianParseError, ZeroObservableError) as exc:
        print(f"tn-ice: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataMismatch, tio.FormatError, tc.DimensionError) as exc:
        print(f"tn-ice: data mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"tn-ice: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
