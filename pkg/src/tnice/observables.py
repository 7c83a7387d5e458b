"""Pauli-sum observables and their vectorized MPS form."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from . import tensor_core as tc
from .povm import PAULIS, PAULI_LABELS

__all__ = [
    "HamiltonianParseError",
    "ZeroObservableError",
    "PauliString",
    "PauliSum",
    "ObservableMPS",
    "parse_hamiltonian",
    "format_hamiltonian",
    "to_mps",
    "expectation_dense",
    "apply_pauli_sum",
    "sparse_matrix",
    "parity_observable",
    "random_two_local",
    "DENSE_MAX_QUBITS",
]

DENSE_MAX_QUBITS = 12
_INDEX = {c: i for i, c in enumerate(PAULI_LABELS)}
_WORD = re.compile(r"^[IXYZ]+$")


class HamiltonianParseError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


class ZeroObservableError(ValueError):
    """The observable has no terms."""


@dataclass(frozen=True)
class PauliString:
    ops: str
    coefficient: float = 1.0

    def __post_init__(self):
        if not _WORD.match(self.ops):
            raise ValueError(f"invalid Pauli word {self.ops!r}")
        object.__setattr__(self, "coefficient", float(self.coefficient))

    @property
    def n(self) -> int:
        return len(self.ops)

    def indices(self) -> list[int]:
        return [_INDEX[c] for c in self.ops]


class PauliSum:
    """Real linear combination of Pauli strings on ``n`` qubits.

    Repeated strings are merged on construction; terms whose merged
    coefficient is exactly zero are dropped.
    """

    def __init__(self, terms: Iterable[PauliString], n: int | None = None):
        merged: dict[str, float] = {}
        for t in terms:
            if n is None:
                n = t.n
            if t.n != n:
                raise ValueError(f"term {t.ops!r} has length {t.n}, expected {n}")
            merged[t.ops] = merged.get(t.ops, 0.0) + t.coefficient
        if n is None:
            raise ZeroObservableError("cannot infer the qubit count of an empty sum")
        self.n = n
        self.terms = tuple(PauliString(w, c) for w, c in merged.items() if c != 0.0)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, str]]) -> PauliSum:
        return cls(PauliString(w, c) for c, w in pairs)

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def as_dict(self) -> dict[str, float]:
        return {t.ops: t.coefficient for t in self.terms}

    def __eq__(self, other) -> bool:
        if not isinstance(other, PauliSum):
            return NotImplemented
        return self.n == other.n and self.as_dict() == other.as_dict()

    def __repr__(self) -> str:
        body = " + ".join(f"{t.coefficient:g}*{t.ops}" for t in self.terms)
        return f"PauliSum({body or '0'}, n={self.n})"

    def norm2(self) -> float:
        """Hilbert-Schmidt norm ``sqrt(Tr[O^2])`` from the coefficients."""
        return math.sqrt(sum(t.coefficient**2 for t in self.terms) * 2**self.n)


def parity_observable(n: int) -> PauliSum:
    """``X^{(x)n} - Y^{(x)n}``; the GHZ state is an eigenstate for even ``n``."""
    return PauliSum([PauliString("X" * n, 1.0), PauliString("Y" * n, -1.0)])


def random_two_local(n: int, seed=None, nearest_neighbour: bool = False) -> PauliSum:
    """Random Hamiltonian with all one- and two-qubit Pauli terms.

    Coefficients are standard normal. Two-qubit terms couple every pair, or
    only adjacent qubits when ``nearest_neighbour`` is set.
    """
    if n < 2:
        raise ValueError("need at least two qubits")
    rng = np.random.default_rng(seed)
    terms = []
    for i in range(n):
        for a in "XYZ":
            word = ["I"] * n
            word[i] = a
            terms.append(PauliString("".join(word), rng.standard_normal()))
    for i in range(n):
        for j in range(i + 1, n):
            if nearest_neighbour and j != i + 1:
                continue
            for a in "XYZ":
                for b in "XYZ":
                    word = ["I"] * n
                    word[i], word[j] = a, b
                    terms.append(PauliString("".join(word), rng.standard_normal()))
    return PauliSum(terms, n)


def parse_hamiltonian(text: str) -> PauliSum:
    """Parse ``<coefficient> <pauli word>`` lines.

    ``#`` starts a comment and blank lines are skipped. All words must have
    the same length.
    """
    terms = []
    n = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise HamiltonianParseError(lineno, f"expected '<coefficient> <word>', got {line!r}")
        try:
            coeff = float(parts[0])
        except ValueError:
            raise HamiltonianParseError(lineno, f"bad coefficient {parts[0]!r}") from None
        if not math.isfinite(coeff):
            raise HamiltonianParseError(lineno, f"non-finite coefficient {parts[0]!r}")
        word = parts[1]
        if not _WORD.match(word):
            raise HamiltonianParseError(lineno, f"bad Pauli word {word!r}")
        if n is None:
            n = len(word)
        elif len(word) != n:
            raise HamiltonianParseError(lineno, f"word {word!r} has length {len(word)}, expected {n}")
        terms.append(PauliString(word, coeff))
    if n is None:
        raise ZeroObservableError("no terms found")
    return PauliSum(terms, n)


def format_hamiltonian(o: PauliSum) -> str:
    return "".join(f"{t.coefficient!r} {t.ops}\n" for t in o.terms)


@dataclass(frozen=True)
class ObservableMPS:
    """Vectorized observable ``|O>>`` with physical extent 4 per site."""

    mps: tc.MPS
    norm2: float
    truncation_error: float = 0.0

    @property
    def n(self) -> int:
        return self.mps.n


def _string_mps(t: PauliString) -> tc.MPS:
    vecs = []
    for q in t.indices():
        v = np.zeros(4)
        v[q] = math.sqrt(2.0)
        vecs.append(v)
    vecs[0] = vecs[0] * t.coefficient
    return tc.product_mps(vecs)


def to_mps(o: PauliSum, chi_max: int | None = None, cutoff: float = 1e-14) -> ObservableMPS:
    """Build ``|O>>`` by adding product strings and recompressing after each.

    Intermediate compressions only drop singular values below ``cutoff``;
    ``chi_max`` is applied once at the end, and the relative discarded
    weight of that step is reported as ``truncation_error``.
    """
    if len(o) == 0:
        raise ZeroObservableError("observable has no terms")
    acc = None
    for t in o.terms:
        term = _string_mps(t)
        if acc is None:
            acc = term
        else:
            acc, _ = tc.compress(tc.add(acc, term), cutoff=cutoff)
    acc, err = tc.compress(acc, chi_max=chi_max, cutoff=cutoff)
    return ObservableMPS(acc, tc.norm(acc), err)


def _apply_string(t: PauliString, psi: np.ndarray) -> np.ndarray:
    n = t.n
    out = psi.reshape((2,) * n)
    for site, q in enumerate(t.indices()):
        if q == 0:
            continue
        out = np.moveaxis(np.tensordot(PAULIS[q], out, axes=(1, site)), 0, site)
    return t.coefficient * out.reshape(-1)


def apply_pauli_sum(o: PauliSum, psi: np.ndarray) -> np.ndarray:
    """``O |psi>`` for a dense state vector."""
    psi = np.asarray(psi, dtype=complex)
    if psi.size != 2**o.n:
        raise ValueError(f"state has {psi.size} amplitudes, expected {2**o.n}")
    out = np.zeros_like(psi)
    for t in o.terms:
        out += _apply_string(t, psi)
    return out


def _guard(n: int) -> None:
    if n > DENSE_MAX_QUBITS:
        raise ValueError(f"dense evaluation limited to {DENSE_MAX_QUBITS} qubits, got {n}")


def expectation_dense(o: PauliSum, state: np.ndarray) -> float:
    """Exact ``<psi|O|psi>`` for a normalized dense state."""
    _guard(o.n)
    psi = np.asarray(state, dtype=complex).reshape(-1)
    return float(np.vdot(psi, apply_pauli_sum(o, psi)).real)


def sparse_matrix(o: PauliSum) -> sp.csr_matrix:
    """Sparse ``2^n x 2^n`` matrix of the observable."""
    _guard(o.n)
    dim = 2**o.n
    total = sp.csr_matrix((dim, dim), dtype=complex)
    locals_ = [sp.csr_matrix(p) for p in PAULIS]
    for t in o.terms:
        m = sp.csr_matrix(np.array([[t.coefficient]], dtype=complex))
        for q in t.indices():
            m = sp.kron(m, locals_[q], format="csr")
        total = total + m
    return total.tocsr()

