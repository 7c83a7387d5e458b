"""Versioned file formats: POVMs, datasets, estimators, reports and traces.

* ``povm-v1``: JSON, per-site effects as Pauli-basis 4-vectors plus labels.
* ``ds-v1``: JSON lines; a header object then one outcome array per shot.
* ``est-v1``: JSON with the estimator site tensors as nested arrays.
* ``rep-v1``: JSON estimate report.
* traces: CSV with one row per local update.

JSON floats are written with ``repr`` precision, so every format
round-trips exactly.
"""

from __future__ import annotations

import csv
import io as _io
import json

import numpy as np

from . import tensor_core as tc
from .estimator import EstimatorMPS
from .optim import TraceRecord, TrainTrace
from .povm import LocalPOVM, ProductPOVM
from .states import OutcomeDataset
from .stats import EstimateReport

__all__ = [
    "FormatError",
    "povm_to_json",
    "povm_from_json",
    "write_povm",
    "read_povm",
    "dataset_to_text",
    "dataset_from_text",
    "write_dataset",
    "read_dataset",
    "estimator_to_json",
    "estimator_from_json",
    "write_estimator",
    "read_estimator",
    "report_to_json",
    "report_from_json",
    "write_report",
    "read_report",
    "trace_to_csv",
    "trace_from_csv",
    "write_trace",
    "read_trace",
]

TRACE_COLUMNS = ["sweep", "site", "second_moment", "penalty", "cost", "test_second_moment"]


class FormatError(ValueError):
    """A file does not follow its declared format."""


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def _expect_version(obj, version: str) -> None:
    if not isinstance(obj, dict) or obj.get("version") != version:
        found = obj.get("version") if isinstance(obj, dict) else type(obj).__name__
        raise FormatError(f"expected format {version!r}, found {found!r}")


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _read_text(path) -> str:
    with open(path, encoding="utf-8", newline="") as fh:
        return fh.read()


# ---------------------------------------------------------------- POVM


def povm_to_json(p: ProductPOVM) -> str:
    sites = [{"labels": list(loc.labels), "effects": loc.matrix().T.tolist()} for loc in p.locals]
    return _dumps({"version": "povm-v1", "n": p.n, "sites": sites}) + "\n"


def povm_from_json(text: str) -> ProductPOVM:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc}") from None
    _expect_version(obj, "povm-v1")
    sites = obj.get("sites")
    if not isinstance(sites, list) or len(sites) != obj.get("n"):
        raise FormatError("'sites' must list one entry per qubit")
    locals_ = []
    for i, site in enumerate(sites):
        try:
            locals_.append(LocalPOVM.from_vectors(site["effects"], site.get("labels")))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"site {i}: {exc}") from None
    return ProductPOVM(locals_)


def write_povm(path, p: ProductPOVM) -> None:
    _write_text(path, povm_to_json(p))


def read_povm(path) -> ProductPOVM:
    return povm_from_json(_read_text(path))


# ---------------------------------------------------------------- datasets


def dataset_to_text(ds: OutcomeDataset) -> str:
    header = _dumps({"version": "ds-v1", "n": ds.n, "s": list(ds.s), "seed": ds.seed})
    body = ["[" + ",".join(map(str, row)) + "]" for row in ds.shots.tolist()]
    return "\n".join([header, *body]) + "\n"


def dataset_from_text(text: str) -> OutcomeDataset:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FormatError("empty dataset file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid header: {exc}") from None
    _expect_version(header, "ds-v1")
    n, s = header.get("n"), header.get("s")
    if not isinstance(n, int) or not isinstance(s, list) or len(s) != n:
        raise FormatError("header needs integer 'n' and a per-site list 's'")
    rows = lines[1:]
    for lineno, line in enumerate(rows, start=2):
        if not (line.startswith("[") and line.endswith("]")):
            raise FormatError(f"line {lineno}: expected a JSON array")
    if rows:
        try:
            flat = np.array(",".join(r[1:-1] for r in rows).split(","), dtype=np.int64)
        except ValueError as exc:
            raise FormatError(f"non-integer outcome index: {exc}") from None
        if flat.size != n * len(rows):
            counts = [r.count(",") + 1 for r in rows]
            bad = next(i for i, c in enumerate(counts) if c != n)
            raise FormatError(f"line {bad + 2}: expected {n} outcome indices")
        shots = flat.reshape(len(rows), n)
    else:
        shots = np.zeros((0, n), dtype=np.int64)
    try:
        return OutcomeDataset(n, s, shots, header.get("seed"))
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def write_dataset(path, ds: OutcomeDataset) -> None:
    _write_text(path, dataset_to_text(ds))


def read_dataset(path) -> OutcomeDataset:
    return dataset_from_text(_read_text(path))


# ---------------------------------------------------------------- estimators


def estimator_to_json(est: EstimatorMPS) -> str:
    obj = {
        "version": "est-v1",
        "n": est.n,
        "s": est.outcome_dims,
        "chi": est.chi,
        "tensors": [np.asarray(t, dtype=float).tolist() for t in est.mps.sites],
        "meta": est.meta,
    }
    return _dumps(obj) + "\n"


def estimator_from_json(text: str) -> EstimatorMPS:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc}") from None
    _expect_version(obj, "est-v1")
    try:
        sites = [np.array(t, dtype=float) for t in obj["tensors"]]
        mps = tc.MPS(sites)
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"bad tensors: {exc}") from None
    if mps.n != obj.get("n") or mps.physical_dims != obj.get("s") or mps.bond_dims != obj.get("chi"):
        raise FormatError("declared n, s or chi disagree with the tensors")
    return EstimatorMPS(mps, dict(obj.get("meta") or {}))


def write_estimator(path, est: EstimatorMPS) -> None:
    _write_text(path, estimator_to_json(est))


def read_estimator(path) -> EstimatorMPS:
    return estimator_from_json(_read_text(path))


# ---------------------------------------------------------------- reports


def report_to_json(rep: EstimateReport) -> str:
    obj = {
        "version": "rep-v1",
        "mean": rep.mean,
        "variance": rep.variance,
        "stderr": rep.stderr,
        "S": rep.S,
        "penalty": rep.penalty,
        "bound": None if rep.bound is None else {"delta": rep.bound[0], "value": rep.bound[1]},
        "kind": rep.kind,
        "clusters": rep.clusters,
        "estimator": rep.estimator_id,
        "annotations": rep.annotations,
    }
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def report_from_json(text: str) -> EstimateReport:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc}") from None
    _expect_version(obj, "rep-v1")
    bound = obj.get("bound")
    try:
        return EstimateReport(
            float(obj["mean"]),
            float(obj["variance"]),
            float(obj["stderr"]),
            int(obj["S"]),
            float(obj["penalty"]),
            None if bound is None else (float(bound["delta"]), float(bound["value"])),
            obj["kind"],
            obj.get("clusters"),
            obj.get("estimator", ""),
            obj.get("annotations") or {},
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad report field: {exc}") from None


def write_report(path, rep: EstimateReport) -> None:
    _write_text(path, report_to_json(rep))


def read_report(path) -> EstimateReport:
    return report_from_json(_read_text(path))


# ---------------------------------------------------------------- traces


def trace_to_csv(trace: TrainTrace) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in trace.records:
        tsm = "" if r.test_second_moment is None else repr(r.test_second_moment)
        w.writerow([r.sweep, r.site, repr(r.second_moment), repr(r.penalty), repr(r.cost), tsm])
    return buf.getvalue()


def trace_from_csv(text: str) -> TrainTrace:
    rows = list(csv.reader(_io.StringIO(text)))
    if not rows or rows[0] != TRACE_COLUMNS:
        raise FormatError(f"trace header must be {','.join(TRACE_COLUMNS)}")
    trace = TrainTrace()
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            sweep, site, sm, pen, cost, tsm = row
            rec = TraceRecord(int(sweep), int(site), float(sm), float(pen), float(cost), float(tsm) if tsm else None)
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
        trace.records.append(rec)
    trace.sweeps = max((r.sweep for r in trace.records), default=0)
    return trace


def write_trace(path, trace: TrainTrace) -> None:
    _write_text(path, trace_to_csv(trace))


def read_trace(path) -> TrainTrace:
    return trace_from_csv(_read_text(path))
