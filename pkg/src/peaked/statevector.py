"""
Exact dense simulation: amplitudes, probabilities, sampling and peak reports.

Basis indexing is little-endian (qubit 0 is the least significant bit of the
index) while printed bitstrings put qubit 0 leftmost.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import InvalidArgument, ResourceLimit

DEFAULT_MAX_QUBITS = 20
DEFAULT_THRESHOLD = 10.0


def apply_operation(t: np.ndarray, mat: np.ndarray, qubits, n: int) -> np.ndarray:
    """Apply a k-qubit matrix to a state tensor of shape (2,)*n + batch.

    ``mat`` is indexed with qubits[0] as its most significant bit.
    """
    k = len(qubits)
    axes = [n - 1 - q for q in qubits]
    m = np.asarray(mat).reshape((2,) * (2 * k))
    out = np.tensordot(m, t, axes=(list(range(k, 2 * k)), axes))
    return np.moveaxis(out, list(range(k)), axes)


def index_to_bitstring(index: int, n: int) -> str:
    return "".join("1" if (index >> q) & 1 else "0" for q in range(n))


def bitstring_to_index(bits: str) -> int:
    if any(ch not in "01" for ch in bits):
        raise InvalidArgument(f"not a bitstring: {bits!r}")
    return sum(1 << q for q, ch in enumerate(bits) if ch == "1")


@dataclass
class StateVector:
    n_q: int
    amplitudes: np.ndarray

    @classmethod
    def zero(cls, n_q: int) -> "StateVector":
        amps = np.zeros(2**n_q, dtype=complex)
        amps[0] = 1.0
        return cls(n_q, amps)

    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def amplitude(self, bits: str) -> complex:
        return complex(self.amplitudes[bitstring_to_index(bits)])


def run(c, max_qubits: int = DEFAULT_MAX_QUBITS, initial: StateVector | None = None) -> StateVector:
    """Apply every operation of ``c`` (Circuit or FlatCircuit) to |0...0>."""
    n = c.n_q
    if n > max_qubits:
        raise ResourceLimit(f"dense simulation limited to {max_qubits} qubits, got {n}")
    state = initial if initial is not None else StateVector.zero(n)
    t = state.amplitudes.reshape((2,) * n)
    for qubits, mat in c.operations():
        t = apply_operation(t, mat, qubits, n)
    return StateVector(n, np.ascontiguousarray(t).reshape(-1))


def probabilities(s: StateVector) -> np.ndarray:
    a = s.amplitudes
    return a.real**2 + a.imag**2


def distribution(s: StateVector, cutoff: float = 0.0) -> dict[str, float]:
    p = probabilities(s)
    idx = np.nonzero(p > cutoff)[0]
    return {index_to_bitstring(int(i), s.n_q): float(p[i]) for i in idx}


def sample_indices(p: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(p)
    return np.searchsorted(cdf, rng.random(shots) * cdf[-1], side="right")


def sample(s: StateVector, shots: int, rng: np.random.Generator) -> dict[str, int]:
    """Inverse-CDF sampling; returns counts keyed by bitstring (sorted)."""
    if shots < 1:
        raise InvalidArgument("shots must be >= 1")
    idx = sample_indices(probabilities(s), shots, rng)
    idx = np.minimum(idx, 2**s.n_q - 1)
    values, counts = np.unique(idx, return_counts=True)
    out = {index_to_bitstring(int(v), s.n_q): int(c) for v, c in zip(values, counts)}
    return dict(sorted(out.items()))


def total_variation(counts: Mapping[str, int], exact: np.ndarray, n_q: int) -> float:
    total = sum(counts.values())
    emp = np.zeros_like(exact, dtype=float)
    for bits, c in counts.items():
        emp[bitstring_to_index(bits)] = c / total
    return 0.5 * float(np.abs(emp - exact).sum())


@dataclass(frozen=True)
class PeakednessReport:
    p_peak: float
    p_second: float
    ratio: float
    peak_string: str
    shots: int | str
    backend: str
    threshold: float = DEFAULT_THRESHOLD

    @property
    def is_peaked(self) -> bool:
        return self.ratio >= self.threshold

    def to_dict(self) -> dict:
        return {
            "p_peak": self.p_peak,
            "p_second": self.p_second,
            "ratio": "inf" if math.isinf(self.ratio) else self.ratio,
            "peak_string": self.peak_string,
            "shots": self.shots,
            "backend": self.backend,
            "is_peaked": self.is_peaked,
            "threshold": self.threshold,
        }


def _top_two(source, n_q: int | None) -> tuple[list[tuple[str, float]], float]:
    if isinstance(source, StateVector):
        source = probabilities(source)
    if isinstance(source, np.ndarray):
        p = np.asarray(source, dtype=float)
        if n_q is None:
            n_q = int(round(math.log2(len(p))))
        k = min(len(p), 4)
        cand = np.argpartition(-p, k - 1)[:k] if len(p) > k else np.arange(len(p))
        items = [(index_to_bitstring(int(i), n_q), float(p[i])) for i in cand if p[i] > 0]
        total = float(p.sum())
    else:
        items = [(k, float(v)) for k, v in source.items() if v > 0]
        total = float(sum(v for _, v in items))
    if not items or total <= 0:
        raise InvalidArgument("empty distribution")
    items.sort(key=lambda kv: (-kv[1], kv[0]))
    return items[:2], total


def peak_report(
    source,
    threshold: float = DEFAULT_THRESHOLD,
    shots: int | str | None = None,
    backend: str = "direct",
    n_q: int | None = None,
) -> PeakednessReport:
    """Top and runner-up frequencies of counts, a probability map or a dense array.

    Ties are broken by lexicographic bitstring order. A single-outcome source
    gives p_second = 0 and ratio = inf.
    """
    top, total = _top_two(source, n_q)
    p_peak = top[0][1] / total
    p_second = top[1][1] / total if len(top) > 1 else 0.0
    ratio = p_peak / p_second if p_second > 0 else math.inf
    if shots is None:
        is_counts = isinstance(source, Mapping) and all(
            isinstance(v, (int, np.integer)) for v in source.values()
        )
        shots = int(total) if is_counts else "exact"
    return PeakednessReport(p_peak, p_second, ratio, top[0][0], shots, backend, threshold)


def write_distribution_csv(path, s: StateVector, cutoff: float = 0.0) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bitstring", "probability"])
        for bits, p in distribution(s, cutoff).items():
            w.writerow([bits, repr(p)])
