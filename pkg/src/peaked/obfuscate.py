"""
Re-synthesis of mirror blocks and tail-group reduction.

Every mirror block is refitted from a random starting point to its own
matrix, then nudged along a random direction in angle space until its
deviation reaches the requested value. The fit is separated from the nudge
(:func:`prepare_mirror` / :func:`apply_mirror_plan`) so a sweep over the
deviation target reuses the expensive part.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import optimize

from .circuit import Block, Circuit, invert_block, mirror_partner_positions
from .errors import InvalidArgument, ReductionFailure, SynthesisFailure
from .linalg import (
    STANDARD,
    SWAP,
    U3Params,
    best_phase,
    block_matrix,
    deviation,
    layout_matrix,
    n_u3,
    normalize_angle,
)
from .statevector import apply_operation, bitstring_to_index, probabilities, run

log = logging.getLogger(__name__)

METHODS = ("least-squares", "cobyla", "nelder-mead")


@dataclass(frozen=True)
class OptimizerConfig:
    max_evaluations: int = 5000
    initial_step: float = 0.5
    convergence_tol: float = 1e-12
    restarts: int = 3
    method: str = "least-squares"
    # root-mean-square row error accepted by reduce_tail_group
    row_tolerance: float = 1.0

    def __post_init__(self):
        for name in ("max_evaluations", "initial_step", "convergence_tol", "restarts", "row_tolerance"):
            if not getattr(self, name) > 0:
                raise InvalidArgument(f"{name} must be positive")
        if self.method not in METHODS:
            raise InvalidArgument(f"method must be one of {METHODS}, got {self.method!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        unknown = set(d) - set(known)
        if unknown:
            raise InvalidArgument(f"unknown optimizer settings: {sorted(unknown)}")
        return cls(**known)


# ---------------------------------------------------------------------------
# generic derivative-free minimisation


class MinimizeResult(tuple):
    """(x, fun) with extra attributes ``evaluations`` and ``status``."""

    def __new__(cls, x, fun, evaluations, status):
        obj = super().__new__(cls, (x, fun))
        obj.x, obj.fun, obj.evaluations, obj.status = x, fun, evaluations, status
        return obj


class _Budget(Exception):
    pass


class _Counted:
    def __init__(self, f, budget):
        self.f, self.budget = f, budget
        self.n = 0
        self.best_x = None
        self.best_f = math.inf

    def __call__(self, x):
        if self.n >= self.budget:
            raise _Budget
        self.n += 1
        v = float(self.f(x))
        if v < self.best_f:
            self.best_f, self.best_x = v, np.array(x, dtype=float)
        return v


def minimize(
    objective: Callable[[np.ndarray], float],
    x0,
    cfg: OptimizerConfig | None = None,
    method: str | None = None,
) -> MinimizeResult:
    """Derivative-free minimisation within ``cfg.max_evaluations`` calls.

    COBYLA runs first on half the budget; unless it already reached
    ``convergence_tol``, Nelder-Mead continues from the best point with what is
    left. ``status`` is
    'converged', 'budget-exhausted' or 'no-improvement'.
    """
    cfg = cfg or OptimizerConfig()
    method = method or ("cobyla" if cfg.method == "least-squares" else cfg.method)
    x0 = np.asarray(x0, dtype=float)
    f = _Counted(objective, cfg.max_evaluations)
    f0 = f(x0)
    exhausted = False
    stages = ["cobyla", "nelder-mead"] if method == "cobyla" else ["nelder-mead"]
    for stage in stages:
        start = f.best_x
        try:
            if stage == "cobyla":
                optimize.minimize(
                    f, start, method="COBYLA",
                    options={"rhobeg": cfg.initial_step,
                             "maxiter": max(cfg.max_evaluations // 2, len(start) + 2),
                             "tol": cfg.convergence_tol},
                )
            else:
                simplex = np.vstack([start, start + cfg.initial_step * np.eye(len(start))])
                optimize.minimize(
                    f, start, method="Nelder-Mead",
                    options={"initial_simplex": simplex, "maxfev": cfg.max_evaluations,
                             "xatol": cfg.convergence_tol, "fatol": cfg.convergence_tol,
                             "adaptive": len(start) > 4},
                )
        except _Budget:
            exhausted = True
            break
        if stage == "cobyla" and f.best_f <= cfg.convergence_tol:
            break
    if not f.best_f < f0:
        status = "no-improvement"
        x, fun = x0, f0
    else:
        status = "budget-exhausted" if exhausted else "converged"
        x, fun = f.best_x, f.best_f
    return MinimizeResult(x, fun, f.n, status)


# ---------------------------------------------------------------------------
# single-block re-synthesis


def _phase_matched(m: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, float]:
    a = best_phase(m, target)
    return m * complex(math.cos(a), math.sin(a)), a


def fitted_deviation(angles, target: np.ndarray, layout: str = STANDARD) -> tuple[float, float]:
    """Deviation of the layout block from ``target`` after the best global phase."""
    m, a = _phase_matched(layout_matrix(layout, angles), target)
    return deviation(m, target), a


def fit_block(
    target: np.ndarray,
    x0,
    cfg: OptimizerConfig,
    layout: str = STANDARD,
) -> tuple[np.ndarray, float, int]:
    """Locally fit block angles to ``target`` (global phase free). Returns (x, dev, evals)."""
    target = np.asarray(target, dtype=complex)
    size = target.size
    if cfg.method == "least-squares":

        def resid(x):
            d = _phase_matched(layout_matrix(layout, x), target)[0] - target
            return np.concatenate([d.real.ravel(), d.imag.ravel()]) / math.sqrt(size)

        tol = max(cfg.convergence_tol, 1e-15)
        sol = optimize.least_squares(
            resid, np.asarray(x0, dtype=float), method="trf",
            xtol=tol, ftol=tol, gtol=tol, max_nfev=cfg.max_evaluations,
        )
        x, evals = sol.x, int(sol.nfev)
    else:
        res = minimize(lambda v: fitted_deviation(v, target, layout)[0], x0, cfg, cfg.method)
        x, evals = res.x, res.evaluations
    x = wrap_angles(x)
    return x, fitted_deviation(x, target, layout)[0], evals


def wrap_angles(x) -> np.ndarray:
    """Wrap each U3 triple into (-pi, pi]; the sign flip from theta is left to the phase fit.

    Several angle combinations are gauge directions of the block (Z rotations
    slide through CZ), so unconstrained fits can drift to huge values that
    cost precision downstream.
    """
    rows = np.asarray(x, dtype=float).reshape(-1, 3)
    return np.array([U3Params(*r).normalized()[0] for r in rows]).ravel()


def angle_distance(a, b) -> float:
    """Largest wrapped per-angle difference between two angle sets."""
    d = np.asarray(a, dtype=float).ravel() - np.asarray(b, dtype=float).ravel()
    return float(max((abs(normalize_angle(v)) for v in d), default=0.0))


@dataclass(frozen=True)
class BlockFit:
    """Cached exact fit of one target plus the random direction used to detune it."""

    target: np.ndarray
    base: np.ndarray
    base_deviation: float
    direction: np.ndarray
    layout: str = STANDARD
    pair: tuple[int, int] = (0, 1)
    evaluations: int = 0


@dataclass(frozen=True)
class SynthesisResult:
    block: Block
    achieved: float
    base_deviation: float
    max_angle_shift: float
    param_distance: float | None = None

    def __iter__(self):
        return iter((self.block, self.achieved))


def _good_enough(dev: float, delta: float) -> bool:
    return dev <= (0.5 * delta if delta > 0 else 1e-9)


def prepare_fit(
    target: np.ndarray,
    rng: np.random.Generator,
    cfg: OptimizerConfig | None = None,
    delta_hint: float = 0.0,
    pair: tuple[int, int] = (0, 1),
    layout: str = STANDARD,
) -> BlockFit:
    """Fit ``target`` from fresh uniform starts, restarting until the fit is tight."""
    cfg = cfg or OptimizerConfig()
    target = np.array(target, dtype=complex)
    if target.shape != (4, 4):
        raise InvalidArgument("target must be 4x4")
    k = 3 * n_u3(layout)
    best = None
    total = 0
    for _ in range(cfg.restarts + 1):
        x0 = rng.uniform(-math.pi, math.pi, k)
        x, dev, evals = fit_block(target, x0, cfg, layout)
        total += evals
        if best is None or dev < best[1]:
            best = (x, dev)
        if _good_enough(dev, delta_hint):
            break
    direction = rng.uniform(-1.0, 1.0, k)
    return BlockFit(target, best[0], best[1], direction, layout, pair, total)


def _block_at(fit: BlockFit, amp: float) -> tuple[Block, float]:
    x = fit.base + amp * fit.direction
    dev, a = fitted_deviation(x, fit.target, fit.layout)
    return Block.from_array(fit.pair, x, fit.layout, a), dev


def detune(fit: BlockFit, delta: float, rel_tol: float = 0.02, max_steps: int = 200) -> SynthesisResult:
    """Move the fitted block along its direction until deviation = delta (within rel_tol)."""
    if delta < 0 or not math.isfinite(delta):
        raise InvalidArgument("delta_target must be a finite number >= 0")
    if delta > 0 and fit.base_deviation > 1.5 * delta:
        raise SynthesisFailure(
            f"best fit deviation {fit.base_deviation:.3e} exceeds 1.5 x target {delta:.3e}"
        )
    amp = 0.0
    blk, dev = _block_at(fit, 0.0)
    lo_band, hi_band = (1 - rel_tol) * delta, (1 + rel_tol) * delta
    if delta > 0 and dev < lo_band:
        # bracket by geometric growth, then bisect in log space
        lo, hi = 0.0, None
        a = delta
        for _ in range(max_steps):
            blk, dev = _block_at(fit, a)
            if lo_band <= dev <= hi_band:
                break
            if dev < lo_band:
                lo = a
            else:
                hi = a
            a = 2.0 * a if hi is None else (math.sqrt(lo * hi) if lo > 0 else 0.5 * hi)
        else:
            raise SynthesisFailure(f"could not tune deviation to {delta:.3e}")
        amp = a
    shift = float(np.max(np.abs(amp * fit.direction))) if amp else 0.0
    achieved = deviation(block_matrix(blk), fit.target)
    return SynthesisResult(blk, achieved, fit.base_deviation, shift)


def resynthesize_block(
    M_target: np.ndarray,
    delta_target: float,
    rng: np.random.Generator,
    cfg: OptimizerConfig | None = None,
    original=None,
    pair: tuple[int, int] = (0, 1),
) -> SynthesisResult:
    """New standard block whose matrix sits ``delta_target`` away from ``M_target``.

    Unpacks as ``(block, achieved)``. With ``original`` angles given, the
    largest wrapped angle difference to them is reported as ``param_distance``.
    """
    if not delta_target >= 0 or not math.isfinite(delta_target):
        raise InvalidArgument("delta_target must be a finite number >= 0")
    fit = prepare_fit(M_target, rng, cfg, delta_target, pair)
    res = detune(fit, delta_target)
    if original is not None:
        res = replace(res, param_distance=angle_distance(res.block.angle_array(), original))
    return res


# ---------------------------------------------------------------------------
# whole mirror half


@dataclass(frozen=True)
class DeviationStats:
    per_block: tuple[float, ...]
    mean: float
    max: float

    @classmethod
    def from_values(cls, values: Iterable[float]) -> "DeviationStats":
        v = tuple(float(x) for x in values)
        if not v:
            return cls((), 0.0, 0.0)
        return cls(v, float(np.mean(v)), max(v))


@dataclass(frozen=True)
class MirrorPlan:
    circuit: Circuit
    positions: tuple[tuple[int, int], ...]
    fits: tuple[BlockFit, ...]
    master_seed: int


def block_stream(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([master_seed, index])


def prepare_mirror(
    c: Circuit,
    rng: np.random.Generator,
    cfg: OptimizerConfig | None = None,
    delta_hint: float = 0.0,
) -> MirrorPlan:
    """Fit every mirror block of ``c``; block k uses the stream (master, k)."""
    cfg = cfg or OptimizerConfig()
    if c.depth <= c.half_depth:
        raise InvalidArgument("circuit has no mirror half")
    master = int(rng.integers(2**63))
    all_pos = c.positions()
    positions, fits = [], []
    for index, (i, j) in enumerate(all_pos):
        if i < c.half_depth:
            continue
        blk = c.layers[i][j]
        fits.append(
            prepare_fit(block_matrix(blk), block_stream(master, index), cfg, delta_hint, blk.pair)
        )
        positions.append((i, j))
    return MirrorPlan(c, tuple(positions), tuple(fits), master)


def apply_mirror_plan(plan: MirrorPlan, delta_target: float) -> tuple[Circuit, DeviationStats]:
    layers = [list(layer) for layer in plan.circuit.layers]
    achieved = []
    for (i, j), fit in zip(plan.positions, plan.fits):
        try:
            res = detune(fit, delta_target)
        except SynthesisFailure as exc:
            index = plan.circuit.positions().index((i, j))
            log.warning("synthesis failure at block %d (master seed %d)", index, plan.master_seed)
            raise SynthesisFailure(str(exc), index, plan.master_seed) from None
        layers[i][j] = res.block
        achieved.append(res.achieved)
    return plan.circuit.with_layers(layers), DeviationStats.from_values(achieved)


def obfuscate_mirror(
    c: Circuit,
    delta_target: float,
    rng: np.random.Generator,
    cfg: OptimizerConfig | None = None,
) -> tuple[Circuit, DeviationStats]:
    """Replace every mirror-half block by a re-synthesised one at ``delta_target``."""
    if not delta_target >= 0 or not math.isfinite(delta_target):
        raise InvalidArgument("delta_target must be a finite number >= 0")
    out, stats = apply_mirror_plan(prepare_mirror(c, rng, cfg, delta_target), delta_target)
    meta = out.metadata
    if meta is not None:
        out = replace(out, metadata=replace(meta, delta_target=delta_target))
    return out, stats


@dataclass(frozen=True)
class SymmetryPair:
    first: tuple[int, int]
    mirror: tuple[int, int]
    deviation: float


def mirror_symmetry_report(c: Circuit) -> list[SymmetryPair]:
    """deviation(B_i, B_{2N+1-i}^-1) for every partner pair."""
    out = []
    for p, q in mirror_partner_positions(c):
        a, b = c.layers[p[0]][p[1]], c.layers[q[0]][q[1]]
        if b.layout == STANDARD:
            inv = block_matrix(invert_block(b))
        else:
            inv = block_matrix(b).conj().T
        # an inverse living on the flipped pair is the same operator relabelled
        m = block_matrix(a)
        if a.pair != b.pair:
            inv = SWAP @ inv @ SWAP
        out.append(SymmetryPair(p, q, deviation(m, inv)))
    return out


# ---------------------------------------------------------------------------
# tail-group reduction


@dataclass(frozen=True)
class TailGroup:
    """Blocks (layer, slot) forming one operator; ``keep`` are refitted, the rest dropped."""

    positions: tuple[tuple[int, int], ...]
    keep: tuple[tuple[int, int], ...]
    qubits: tuple[int, ...]


def tail_group(c: Circuit) -> TailGroup:
    """The whole last two layers, replaced by the second-to-last layer alone."""
    if c.depth - c.half_depth < 2:
        raise InvalidArgument("need at least two mirror layers")
    last, prev = c.depth - 1, c.depth - 2
    keep = tuple((prev, j) for j in range(len(c.layers[prev])))
    drop = tuple((last, j) for j in range(len(c.layers[last])))
    qubits = tuple(q for i, j in keep + drop for q in c.layers[i][j].pair)
    return TailGroup(keep + drop, keep, tuple(dict.fromkeys(qubits)))


def pyramid_group(c: Circuit, slot: int = 0) -> TailGroup:
    """Last-layer block at ``slot`` together with the previous-layer blocks beneath it."""
    if c.depth - c.half_depth < 2:
        raise InvalidArgument("need at least two mirror layers")
    last, prev = c.depth - 1, c.depth - 2
    top = c.layers[last][slot]
    keep = tuple(
        (prev, j) for j, b in enumerate(c.layers[prev]) if set(b.pair) & set(top.pair)
    )
    qubits = tuple(q for i, j in keep for q in c.layers[i][j].pair)
    qubits = tuple(dict.fromkeys(qubits + top.pair))
    return TailGroup(keep + ((last, slot),), keep, qubits)


def group_rows(c: Circuit, group: TailGroup, x_hid: str) -> list[int]:
    """Local basis rows the reduced group must reproduce.

    Qubits that nothing acts on after the kept blocks are pinned to their
    ``x_hid`` bit; the rest are free.
    """
    dropped = set(group.positions) - set(group.keep)
    last_keep = max(i for i, _ in group.keep)
    later = {
        q
        for i in range(last_keep + 1, c.depth)
        for j, b in enumerate(c.layers[i])
        if (i, j) not in dropped
        for q in b.pair
    }
    k = len(group.qubits)
    rows = []
    for r in range(2**k):
        if all(
            ((r >> loc) & 1) == int(x_hid[q])
            for loc, q in enumerate(group.qubits)
            if q not in later
        ):
            rows.append(r)
    return rows


def _operator_rows(blocks: Sequence[Block], qubits, rows) -> np.ndarray:
    """Rows ``rows`` of the product of ``blocks`` (time order) on local ``qubits``."""
    loc = {q: k for k, q in enumerate(qubits)}
    n = len(qubits)
    t = np.zeros((2**n, len(rows)), dtype=complex)
    t[list(rows), range(len(rows))] = 1.0
    t = t.reshape((2,) * n + (len(rows),))
    for b in reversed(blocks):
        m = block_matrix(b).conj().T
        t = apply_operation(t, m, (loc[b.pair[0]], loc[b.pair[1]]), n)
    return t.reshape(2**n, len(rows)).conj().T


@dataclass(frozen=True)
class ReductionResult:
    circuit: Circuit
    row_error: float
    removed_blocks: int


def reduce_tail_group(
    c: Circuit,
    group: TailGroup,
    rows: Iterable[int],
    rng: np.random.Generator,
    cfg: OptimizerConfig | None = None,
) -> ReductionResult:
    """Drop the non-kept blocks of ``group`` and refit the kept ones on ``rows``.

    Raises ReductionFailure when the root-mean-square row error stays above
    ``cfg.row_tolerance``; the input circuit is not modified either way.
    """
    cfg = cfg or OptimizerConfig()
    rows = sorted(set(int(r) for r in rows))
    if not rows:
        raise InvalidArgument("rows must be nonempty")
    if not group.keep or set(group.keep) >= set(group.positions):
        raise InvalidArgument("group must keep some blocks and drop at least one")
    blocks = [c.layers[i][j] for i, j in group.positions]
    target = _operator_rows(blocks, group.qubits, rows)
    kept = [c.layers[i][j] for i, j in group.keep]
    n_r = len(rows)

    def template(y, phases=None):
        return [
            Block.from_array(b.pair, y[18 * k : 18 * k + 18], STANDARD, 0.0 if phases is None else phases[k])
            for k, b in enumerate(kept)
        ]

    def resid(y):
        a = _operator_rows(template(y), group.qubits, rows)
        a, _ = _phase_matched(a, target)
        d = (a - target).ravel()
        return np.concatenate([d.real, d.imag]) / math.sqrt(n_r)

    starts = [np.concatenate([b.angle_array().ravel() for b in kept])] if all(
        b.layout == STANDARD for b in kept
    ) else []
    starts += [rng.uniform(-math.pi, math.pi, 18 * len(kept)) for _ in range(cfg.restarts)]
    best = None
    for y0 in starts:
        sol = optimize.least_squares(resid, y0, method="trf", max_nfev=cfg.max_evaluations * 4)
        err = float(np.linalg.norm(sol.fun))
        if best is None or err < best[1]:
            best = (sol.x, err)
    y, err = best
    if err > cfg.row_tolerance:
        raise ReductionFailure(f"row error {err:.3f} above tolerance {cfg.row_tolerance}")
    a = _operator_rows(template(y), group.qubits, rows)
    alpha = best_phase(a, target)
    new = template(y, [alpha] + [0.0] * (len(kept) - 1))
    layers = [list(layer) for layer in c.layers]
    for (i, j), b in zip(group.keep, new):
        layers[i][j] = b
    dropped = set(group.positions) - set(group.keep)
    layers = [
        [b for j, b in enumerate(layer) if (i, j) not in dropped] for i, layer in enumerate(layers)
    ]
    while layers and not layers[-1] and len(layers) > c.half_depth:
        layers.pop()
    return ReductionResult(c.with_layers(layers), err, len(dropped))


@dataclass(frozen=True)
class ShrinkReport:
    mode: str
    row_errors: tuple[float, ...]
    removed_blocks: int
    removed_layers: int
    p_peak_before: float | None = None
    p_peak_after: float | None = None
    ratio_before: float | None = None
    ratio_after: float | None = None

    @property
    def degradation(self) -> float | None:
        if self.p_peak_before is None:
            return None
        return self.p_peak_before - self.p_peak_after


def shrink_tail(
    c: Circuit,
    x_hid: str,
    rng: np.random.Generator,
    cfg: OptimizerConfig | None = None,
    mode: str = "auto",
    dense_cap: int = 12,
) -> tuple[Circuit, ShrinkReport]:
    """One reduction pass removing the last mirror layer.

    ``mode`` is 'tail' (one group spanning all qubits), 'pyramid' (one group
    per last-layer block, processed in order) or 'auto' (tail when the
    register is small enough for it).
    """
    if len(x_hid) != c.n_q or any(ch not in "01" for ch in x_hid):
        raise InvalidArgument(f"hidden string must be {c.n_q} characters of 0/1")
    if mode == "auto":
        mode = "tail" if c.n_q <= dense_cap else "pyramid"
    if mode not in ("tail", "pyramid"):
        raise InvalidArgument(f"unknown reduction mode {mode!r}")
    depth0 = c.depth
    errors, removed = [], 0
    out = c
    if mode == "tail":
        g = tail_group(out)
        res = reduce_tail_group(out, g, group_rows(out, g, x_hid), rng, cfg)
        out, errors, removed = res.circuit, [res.row_error], res.removed_blocks
    else:
        target_depth = depth0 - 1
        while out.depth > target_depth:
            g = pyramid_group(out, 0)
            res = reduce_tail_group(out, g, group_rows(out, g, x_hid), rng, cfg)
            out = res.circuit
            errors.append(res.row_error)
            removed += res.removed_blocks
    before = after = None
    if c.n_q <= dense_cap:
        before, after = _peak_stats(c, x_hid), _peak_stats(out, x_hid)
    report = ShrinkReport(
        mode,
        tuple(errors),
        removed,
        depth0 - out.depth,
        *(None, None, None, None) if before is None else (before[0], after[0], before[1], after[1]),
    )
    return out, report


def _peak_stats(c: Circuit, bits: str) -> tuple[float, float]:
    """(P(bits), P(bits) / largest other probability)."""
    p = probabilities(run(c))
    i = bitstring_to_index(bits)
    rest = np.delete(p, i)
    other = float(rest.max()) if rest.size else 0.0
    return float(p[i]), (float(p[i]) / other if other > 0 else math.inf)
