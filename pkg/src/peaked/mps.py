"""
Matrix-product-state simulation with a hard bond-dimension cap.

Site ``q`` holds qubit ``q``; tensors have shape (left bond, 2, right bond).
The state is kept in mixed canonical form around ``center``. Two-qubit gates
on non-neighbouring sites (the ring pair) are routed with adjacent SWAPs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument
from .linalg import SWAP
from .statevector import PeakednessReport, peak_report


@dataclass
class MPSState:
    n_q: int
    tensors: list[np.ndarray]
    chi_cap: int
    cumulative_truncation: float = 0.0
    center: int = 0
    max_bond: int = 1
    gates_applied: int = field(default=0, repr=False)

    @classmethod
    def zero(cls, n_q: int, chi_cap: int) -> "MPSState":
        if chi_cap < 1:
            raise InvalidArgument(f"chi must be >= 1, got {chi_cap}")
        if n_q < 1:
            raise InvalidArgument("n_q must be >= 1")
        t = np.zeros((1, 2, 1), dtype=complex)
        t[0, 0, 0] = 1.0
        return cls(n_q, [t.copy() for _ in range(n_q)], int(chi_cap))

    def bond_dims(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    # -- canonical form -------------------------------------------------

    def move_center(self, site: int) -> None:
        ts = self.tensors
        while self.center < site:
            c = self.center
            l, d, r = ts[c].shape
            q, rmat = np.linalg.qr(ts[c].reshape(l * d, r))
            ts[c] = q.reshape(l, d, q.shape[1])
            ts[c + 1] = np.tensordot(rmat, ts[c + 1], axes=(1, 0))
            self.center += 1
        while self.center > site:
            c = self.center
            l, d, r = ts[c].shape
            q, rmat = np.linalg.qr(ts[c].reshape(l, d * r).T)
            ts[c] = q.T.reshape(q.shape[1], d, r)
            ts[c - 1] = np.tensordot(ts[c - 1], rmat.T, axes=(2, 0))
            self.center -= 1

    def isometry_errors(self) -> list[float]:
        """Deviation from left (right) isometry of each site left (right) of the center."""
        out = []
        for k, t in enumerate(self.tensors):
            l, d, r = t.shape
            if k < self.center:
                m = t.reshape(l * d, r)
                out.append(float(np.linalg.norm(m.conj().T @ m - np.eye(r))))
            elif k > self.center:
                m = t.reshape(l, d * r)
                out.append(float(np.linalg.norm(m @ m.conj().T - np.eye(l))))
        return out

    def norm(self) -> float:
        return float(np.linalg.norm(self.tensors[self.center]) ** 2)

    # -- gates ------------------------------------------------------------

    def apply_1q(self, site: int, u: np.ndarray) -> None:
        self.tensors[site] = np.einsum("st,ltr->lsr", u, self.tensors[site])

    def apply_adjacent(self, site: int, g: np.ndarray) -> None:
        """Gate on (site, site+1); ``g`` takes ``site`` as its high bit."""
        self.move_center(site)
        a, b = self.tensors[site], self.tensors[site + 1]
        l, r = a.shape[0], b.shape[2]
        theta = np.tensordot(a, b, axes=(2, 0))  # l, s, t, r
        theta = np.tensordot(g.reshape(2, 2, 2, 2), theta, axes=([2, 3], [1, 2]))
        theta = theta.transpose(2, 0, 1, 3).reshape(l * 2, 2 * r)
        u, s, vh = np.linalg.svd(theta, full_matrices=False)
        keep = min(self.chi_cap, int(np.count_nonzero(s > 1e-14 * s[0])) or 1)
        total = float(np.sum(s**2))
        kept = float(np.sum(s[:keep] ** 2))
        self.cumulative_truncation += max(total - kept, 0.0) / total
        s = s[:keep] / math.sqrt(kept)
        self.tensors[site] = u[:, :keep].reshape(l, 2, keep)
        self.tensors[site + 1] = (s[:, None] * vh[:keep]).reshape(keep, 2, r)
        self.center = site + 1
        self.max_bond = max(self.max_bond, keep)
        self.gates_applied += 1

    def apply_2q(self, qubits: tuple[int, int], g: np.ndarray) -> None:
        """Gate on arbitrary (a, b), routing a next to b with SWAPs and back."""
        a, b = qubits
        if a > b:
            a, b = b, a
            g = SWAP @ g @ SWAP
        # bring site a up to b - 1
        for k in range(a, b - 1):
            self.apply_adjacent(k, SWAP)
        self.apply_adjacent(b - 1, g)
        for k in range(b - 2, a - 1, -1):
            self.apply_adjacent(k, SWAP)


def mps_run(c, chi: int) -> MPSState:
    """Apply every operation of ``c`` to |0...0> with bond cap ``chi``."""
    if int(chi) != chi or chi < 1:
        raise InvalidArgument(f"chi must be a positive integer, got {chi!r}")
    m = MPSState.zero(c.n_q, int(chi))
    for qubits, mat in c.operations():
        if len(qubits) == 1:
            m.apply_1q(qubits[0], mat)
        else:
            m.apply_2q(tuple(qubits), mat)
    return m


def mps_amplitude(m: MPSState, x: str) -> complex:
    if len(x) != m.n_q or any(ch not in "01" for ch in x):
        raise InvalidArgument(f"bitstring of length {m.n_q} expected, got {x!r}")
    v = np.ones(1, dtype=complex)
    for t, ch in zip(m.tensors, x):
        v = v @ t[:, int(ch), :]
    return complex(v[0])


def mps_to_dense(m: MPSState) -> np.ndarray:
    """Little-endian dense amplitudes (test helper; exponential cost)."""
    v = m.tensors[0].reshape(2, -1)
    for t in m.tensors[1:]:
        v = np.tensordot(v, t, axes=(1, 0)).reshape(-1, t.shape[2])
    # v index has qubit 0 as the most significant digit; flip to little-endian
    n = m.n_q
    return v.reshape((2,) * n).transpose(list(range(n))[::-1]).reshape(-1)


def mps_sample(m: MPSState, shots: int, rng: np.random.Generator) -> dict[str, int]:
    """Exact sequential sampling of the (truncated) state's Born distribution.

    Shots sharing a prefix are drawn together: each group splits binomially
    on the next bit's conditional marginal.
    """
    if shots < 1:
        raise InvalidArgument("shots must be >= 1")
    m.move_center(0)
    groups = [("", np.ones(1, dtype=complex), int(shots))]
    for t in m.tensors:
        nxt = []
        for prefix, env, count in groups:
            v0 = env @ t[:, 0, :]
            v1 = env @ t[:, 1, :]
            p0 = float(np.vdot(v0, v0).real)
            p1 = float(np.vdot(v1, v1).real)
            tot = p0 + p1
            n0 = int(rng.binomial(count, p0 / tot)) if tot > 0 else count
            if n0:
                nxt.append((prefix + "0", v0 / math.sqrt(p0), n0))
            if count - n0:
                nxt.append((prefix + "1", v1 / math.sqrt(p1), count - n0))
        groups = nxt
    return dict(sorted((p, c) for p, _, c in groups))


ABOVE_MAX = "above-max"


@dataclass
class ChiSearch:
    chi_th: int | str
    trials: dict[int, bool]
    monotone: bool
    chi_max: int
    reports: dict[int, PeakednessReport] = field(default_factory=dict, repr=False)


def _attempt(c, chi, x_hid, threshold, shots, seed):
    m = mps_run(c, chi)
    if x_hid is None:
        r1 = peak_report(mps_sample(m, shots, np.random.default_rng([seed, chi, 0])),
                         threshold, backend="mps")
        r2 = peak_report(mps_sample(m, shots, np.random.default_rng([seed, chi, 1])),
                         threshold, backend="mps")
        ok = r1.is_peaked and r2.is_peaked and r1.peak_string == r2.peak_string
        return ok, r1
    r = peak_report(mps_sample(m, shots, np.random.default_rng([seed, chi])),
                    threshold, backend="mps")
    return r.is_peaked and r.peak_string == x_hid, r


def find_chi_threshold(
    c,
    x_hid: str | None,
    threshold: float = 10.0,
    shots: int = 100_000,
    seed: int = 0,
    chi_max: int | None = None,
) -> ChiSearch:
    """Smallest chi at which sampling the capped MPS identifies the hidden string.

    Doubling from chi = 1 finds a bracket, bisection narrows it, and chi_th + 1
    is spot-checked for monotonicity. With ``x_hid=None`` success means the
    same peaked top string under two independent sampling seeds.
    """
    if x_hid is not None and len(x_hid) != c.n_q:
        raise InvalidArgument("hidden string length does not match circuit")
    chi_max = chi_max or 2 ** (c.n_q // 2)
    trials: dict[int, bool] = {}
    reports: dict[int, PeakednessReport] = {}

    def ok(chi):
        if chi not in trials:
            trials[chi], reports[chi] = _attempt(c, chi, x_hid, threshold, shots, seed)
        return trials[chi]

    chi, lo = 1, 0
    while chi < chi_max and not ok(chi):
        lo = chi
        chi *= 2
    chi = min(chi, chi_max)
    if not ok(chi):
        return ChiSearch(ABOVE_MAX, trials, True, chi_max, reports)
    hi = chi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    monotone = True
    if hi + 1 <= chi_max:
        monotone = ok(hi + 1)
    return ChiSearch(hi, trials, monotone, chi_max, reports)
