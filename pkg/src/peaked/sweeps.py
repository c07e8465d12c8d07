"""
Parameter studies over (n_q, n_l) grids.

Three studies are provided: peak probability at a fixed deviation, the
largest deviation that keeps the circuit peaked, and the smallest MPS bond
dimension that still reveals the hidden string. Every (cell, seed) job gets
its own seed derived from (master, n_q, n_l, seed index), so results do not
depend on how jobs are scheduled.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidArgument, ParseError, PeakedError
from .mps import ABOVE_MAX, find_chi_threshold, mps_run, mps_sample
from .obfuscate import OptimizerConfig
from .pipeline import PreparedPipeline, finish_pipeline, prepare_pipeline
from .statevector import bitstring_to_index, probabilities, run, sample

CSV_HEADER = "n_q,n_l,seed,delta,p_peak,p_second,ratio,is_peaked,backend,chi,wall_ms"
KINDS = ("peakedness", "delta-threshold", "chi-threshold")


@dataclass(frozen=True)
class SweepSpec:
    n_q: tuple[int, ...]
    n_l: tuple[int, ...]
    delta: float = 0.003
    seeds: int = 10
    shots: int | None = None  # None: exact probabilities (dense backend only)
    threshold: float = 10.0
    backend: str = "direct"
    chi: int | None = None
    master_seed: int = 0
    delta_bracket: tuple[float, float] = (1e-4, 0.1)
    rel_width: float = 0.1
    mps_shots: int = 100_000
    workers: int = 1
    record_wall_time: bool = True
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self):
        object.__setattr__(self, "n_q", tuple(int(v) for v in self.n_q))
        object.__setattr__(self, "n_l", tuple(int(v) for v in self.n_l))
        object.__setattr__(self, "delta_bracket", tuple(float(v) for v in self.delta_bracket))
        if not self.n_q or not self.n_l:
            raise InvalidArgument("n_q and n_l grids must be nonempty")
        if any(v < 4 or v % 2 for v in self.n_q):
            raise InvalidArgument("n_q grid entries must be even and >= 4")
        if any(v < 1 for v in self.n_l):
            raise InvalidArgument("n_l grid entries must be >= 1")
        if self.seeds < 1:
            raise InvalidArgument("seeds must be >= 1")
        if self.backend not in ("direct", "mps"):
            raise InvalidArgument(f"backend must be 'direct' or 'mps', got {self.backend!r}")
        if self.backend == "mps" and self.shots is None:
            object.__setattr__(self, "shots", self.mps_shots)
        lo, hi = self.delta_bracket
        if not 0 < lo < hi:
            raise InvalidArgument("delta bracket must satisfy 0 < lo < hi")
        if self.delta < 0:
            raise InvalidArgument("delta must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        d = dict(d)
        d.pop("kind", None)
        opt = d.pop("optimizer", None)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidArgument(f"unknown sweep settings: {sorted(unknown)}")
        if opt is not None:
            d["optimizer"] = OptimizerConfig.from_dict(opt)
        return cls(**d)

    def header(self) -> dict:
        d = asdict(self)
        d.pop("workers")
        return d


@dataclass(frozen=True)
class SweepRow:
    n_q: int
    n_l: int
    seed: int
    delta: float
    p_peak: float
    p_second: float
    ratio: float
    is_peaked: bool
    backend: str
    chi: int | str | None = None
    wall_ms: float | None = None

    def csv_fields(self) -> list[str]:
        def num(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return "inf" if math.isinf(v) else repr(v)
            return str(v)

        return [
            str(self.n_q), str(self.n_l), str(self.seed), num(self.delta), num(self.p_peak),
            num(self.p_second), num(self.ratio), "true" if self.is_peaked else "false",
            self.backend, num(self.chi),
            "" if self.wall_ms is None else f"{self.wall_ms:.1f}",
        ]


@dataclass
class SweepResult:
    kind: str
    spec: SweepSpec
    rows: list[SweepRow]
    cells: dict[tuple[int, int], dict] = field(default_factory=dict)
    failures: list[tuple[int, int, int, str]] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# kind={self.kind}\n")
        for k, v in self.spec.header().items():
            buf.write(f"# {k}={json.dumps(v, sort_keys=True)}\n")
        buf.write(CSV_HEADER + "\n")
        w = csv.writer(buf, lineterminator="\n")
        for r in self.rows:
            w.writerow(r.csv_fields())
        return buf.getvalue()

    def cells_csv(self) -> str:
        keys = sorted({k for v in self.cells.values() for k in v})
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n_q", "n_l"] + keys)
        for (nq, nl), v in sorted(self.cells.items()):
            w.writerow([nq, nl] + [_fmt(v.get(k)) for k in keys])
        return buf.getvalue()

    def median_grid(self, key: str) -> dict[tuple[int, int], float]:
        return {cell: v[key] for cell, v in self.cells.items() if key in v}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


def cell_seed(master: int, n_q: int, n_l: int, index: int) -> int:
    return int(np.random.SeedSequence([master, n_q, n_l, index]).generate_state(1, np.uint64)[0] >> 1)


def hidden_stats(source, x_hid: str) -> tuple[float, float, float]:
    """(P(x_hid), largest other probability, ratio) from exact probabilities or counts."""
    if isinstance(source, dict):
        total = sum(source.values())
        p_hid = source.get(x_hid, 0) / total
        others = [v for k, v in source.items() if k != x_hid]
        p_sec = max(others) / total if others else 0.0
    else:
        p = np.asarray(source, dtype=float)
        i = bitstring_to_index(x_hid)
        p_hid = float(p[i])
        rest = np.delete(p, i)
        p_sec = float(rest.max()) if rest.size else 0.0
    ratio = p_hid / p_sec if p_sec > 0 else math.inf
    return p_hid, p_sec, ratio


def _measure(spec: SweepSpec, circuit, x_hid: str, seed: int):
    if spec.backend == "direct":
        state = run(circuit)
        if spec.shots is None:
            return hidden_stats(probabilities(state), x_hid)
        return hidden_stats(sample(state, spec.shots, np.random.default_rng([seed, 1])), x_hid)
    m = mps_run(circuit, spec.chi or 2 ** (circuit.n_q // 2))
    return hidden_stats(mps_sample(m, spec.shots, np.random.default_rng([seed, 1])), x_hid)


def _row(spec, n_q, n_l, idx, delta, stats, chi, t0) -> SweepRow:
    p_hid, p_sec, ratio = stats
    wall = (time.perf_counter() - t0) * 1e3 if spec.record_wall_time else None
    return SweepRow(n_q, n_l, idx, delta, p_hid, p_sec, ratio, ratio >= spec.threshold,
                    spec.backend, chi, wall)


# -- per-job workers (module level so a process pool can pickle them) --------


def _job_peakedness(spec: SweepSpec, n_q: int, n_l: int, idx: int) -> SweepRow:
    t0 = time.perf_counter()
    seed = cell_seed(spec.master_seed, n_q, n_l, idx)
    prep = prepare_pipeline(n_q, n_l, seed, None, spec.optimizer)
    out = finish_pipeline(prep, spec.delta)
    stats = _measure(spec, out.circuit, prep.hidden, seed)
    return _row(spec, n_q, n_l, idx, out.stats.mean, stats, spec.chi if spec.backend == "mps" else None, t0)


def _job_chi(spec: SweepSpec, n_q: int, n_l: int, idx: int) -> SweepRow:
    t0 = time.perf_counter()
    seed = cell_seed(spec.master_seed, n_q, n_l, idx)
    out = finish_pipeline(prepare_pipeline(n_q, n_l, seed, None, spec.optimizer), spec.delta)
    shots = spec.shots or spec.mps_shots
    res = find_chi_threshold(out.circuit, out.hidden, spec.threshold, shots, seed)
    if res.chi_th == ABOVE_MAX:
        m = mps_run(out.circuit, res.chi_max)
    else:
        m = mps_run(out.circuit, res.chi_th)
    stats = hidden_stats(mps_sample(m, shots, np.random.default_rng([seed, 1])), out.hidden)
    row = _row(spec, n_q, n_l, idx, out.stats.mean, stats, res.chi_th, t0)
    return replace(row, backend="mps")


def _job_prepare(spec: SweepSpec, n_q: int, n_l: int, idx: int) -> PreparedPipeline:
    seed = cell_seed(spec.master_seed, n_q, n_l, idx)
    return prepare_pipeline(n_q, n_l, seed, None, spec.optimizer)


def _run_jobs(fn: Callable, spec: SweepSpec, keys: Sequence[tuple[int, int, int]]):
    """Run fn(spec, *key) for every key; returns {key: result or exception text}."""
    out = {}
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            futs = {k: pool.submit(fn, spec, *k) for k in keys}
            for k, f in futs.items():
                try:
                    out[k] = f.result()
                except PeakedError as exc:
                    out[k] = f"{type(exc).__name__}: {exc}"
    else:
        for k in keys:
            try:
                out[k] = fn(spec, *k)
            except PeakedError as exc:
                out[k] = f"{type(exc).__name__}: {exc}"
    return out


def _keys(spec: SweepSpec) -> list[tuple[int, int, int]]:
    return [(nq, nl, s) for nq in spec.n_q for nl in spec.n_l for s in range(spec.seeds)]


def _collect(kind, spec, results) -> SweepResult:
    rows, failures = [], []
    for k in sorted(results):
        v = results[k]
        if isinstance(v, str):
            failures.append((*k, v))
        else:
            rows.append(v)
    return SweepResult(kind, spec, rows, failures=failures)


def _medians(res: SweepResult, chi_max: Callable[[int], int] | None = None) -> None:
    by_cell: dict[tuple[int, int], list[SweepRow]] = {}
    for r in res.rows:
        by_cell.setdefault((r.n_q, r.n_l), []).append(r)
    for cell, rows in by_cell.items():
        d = res.cells.setdefault(cell, {})
        d["median_p_peak"] = float(np.median([r.p_peak for r in rows]))
        d["median_ratio"] = float(np.median([r.ratio for r in rows]))
        d["median_delta"] = float(np.median([r.delta for r in rows]))
        d["peaked_fraction"] = float(np.mean([r.is_peaked for r in rows]))
        d["seeds"] = len(rows)
        if chi_max is not None:
            # above-max rows count as one past the cap
            vals = [r.chi if isinstance(r.chi, int) else chi_max(cell[0]) + 1 for r in rows]
            d["median_chi_th"] = float(np.median(vals))
            d["above_max"] = sum(not isinstance(r.chi, int) for r in rows)


def sweep_peakedness(spec: SweepSpec) -> SweepResult:
    """Full pipeline at ``spec.delta`` for every cell and seed; medians per cell."""
    res = _collect("peakedness", spec, _run_jobs(_job_peakedness, spec, _keys(spec)))
    _medians(res)
    return res


def sweep_chi_threshold(spec: SweepSpec) -> SweepResult:
    """Median chi_th per cell (MPS sampling with ``spec.shots`` or ``mps_shots``)."""
    res = _collect("chi-threshold", spec, _run_jobs(_job_chi, spec, _keys(spec)))
    _medians(res, chi_max=lambda nq: 2 ** (nq // 2))
    return res


def _peaked_majority(spec: SweepSpec, preps: list[PreparedPipeline], delta: float):
    rows = []
    for idx, prep in enumerate(preps):
        t0 = time.perf_counter()
        out = finish_pipeline(prep, delta)
        stats = _measure(spec, out.circuit, prep.hidden, prep.seed)
        rows.append(_row(spec, prep.n_q, prep.n_l, idx, out.stats.mean, stats,
                         spec.chi if spec.backend == "mps" else None, t0))
    # median of the 0/1 indicator, ties counted as peaked
    ok = float(np.median([r.is_peaked for r in rows])) >= 0.5
    return ok, rows


def delta_threshold_cell(spec: SweepSpec, preps: list[PreparedPipeline]) -> dict:
    """Geometric bisection of the median peaked indicator over ``spec.delta_bracket``."""
    lo, hi = spec.delta_bracket
    ok_lo, rows_lo = _peaked_majority(spec, preps, lo)
    ok_hi, rows_hi = _peaked_majority(spec, preps, hi)
    steps = 2
    if not ok_lo or ok_hi:
        return {"delta_th": None, "lo": lo, "hi": hi, "resolved": False, "steps": steps,
                "rows": rows_lo if ok_lo else rows_hi}
    while hi / lo - 1 > spec.rel_width:
        mid = math.sqrt(lo * hi)
        ok, rows = _peaked_majority(spec, preps, mid)
        steps += 1
        if ok:
            lo, rows_lo = mid, rows
        else:
            hi = mid
    return {"delta_th": lo, "lo": lo, "hi": hi, "resolved": True, "steps": steps, "rows": rows_lo}


def _job_delta_cell(spec: SweepSpec, n_q: int, n_l: int) -> dict:
    preps = [_job_prepare(spec, n_q, n_l, s) for s in range(spec.seeds)]
    return delta_threshold_cell(spec, preps)


def sweep_delta_threshold(spec: SweepSpec) -> SweepResult:
    """delta_th per cell; rows hold each seed's outcome at the returned delta_th."""
    cells = [(nq, nl) for nq in spec.n_q for nl in spec.n_l]
    results = {}
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            futs = {c: pool.submit(_job_delta_cell, spec, *c) for c in cells}
            for c, f in futs.items():
                try:
                    results[c] = f.result()
                except PeakedError as exc:
                    results[c] = f"{type(exc).__name__}: {exc}"
    else:
        for c in cells:
            try:
                results[c] = _job_delta_cell(spec, *c)
            except PeakedError as exc:
                results[c] = f"{type(exc).__name__}: {exc}"
    res = SweepResult("delta-threshold", spec, [])
    for c in sorted(results):
        v = results[c]
        if isinstance(v, str):
            res.failures.append((*c, -1, v))
            continue
        res.rows.extend(v.pop("rows"))
        res.cells[c] = v
    return res


def run_sweep(kind: str, spec: SweepSpec) -> SweepResult:
    if kind == "peakedness":
        return sweep_peakedness(spec)
    if kind == "delta-threshold":
        return sweep_delta_threshold(spec)
    if kind == "chi-threshold":
        return sweep_chi_threshold(spec)
    raise InvalidArgument(f"unknown sweep kind {kind!r}; expected one of {KINDS}")


def spearman_by_axis(grid: dict[tuple[int, int], float]) -> dict[str, list[float]]:
    """Spearman rank correlation of a cell grid along n_l (per n_q) and along n_q (per n_l)."""
    from scipy.stats import spearmanr

    nqs = sorted({k[0] for k in grid})
    nls = sorted({k[1] for k in grid})
    out = {"n_l": [], "n_q": []}
    for nq in nqs:
        xs = [nl for nl in nls if (nq, nl) in grid]
        if len(xs) >= 2:
            out["n_l"].append(float(spearmanr(xs, [grid[nq, nl] for nl in xs])[0]))
    for nl in nls:
        xs = [nq for nq in nqs if (nq, nl) in grid]
        if len(xs) >= 2:
            out["n_q"].append(float(spearmanr(xs, [grid[nq, nl] for nq in xs])[0]))
    return out


def plot_svg(result: SweepResult, path, key: str | None = None) -> None:
    """Heat map of a per-cell median as SVG (needs matplotlib)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    key = key or {"peakedness": "median_p_peak", "delta-threshold": "delta_th",
                  "chi-threshold": "median_chi_th"}[result.kind]
    nqs = sorted({c[0] for c in result.cells})
    nls = sorted({c[1] for c in result.cells})
    z = np.full((len(nqs), len(nls)), np.nan)
    for (nq, nl), v in result.cells.items():
        if v.get(key) is not None:
            z[nqs.index(nq), nls.index(nl)] = v[key]
    fig, ax = plt.subplots(figsize=(1.2 * len(nls) + 2, 0.8 * len(nqs) + 1.5))
    im = ax.imshow(z, origin="lower", aspect="auto", cmap="viridis")
    ax.set_xticks(range(len(nls)), [str(v) for v in nls])
    ax.set_yticks(range(len(nqs)), [str(v) for v in nqs])
    ax.set_xlabel("n_l")
    ax.set_ylabel("n_q")
    ax.set_title(key)
    fig.colorbar(im, ax=ax)
    fig.savefig(path, format="svg")
    plt.close(fig)


def load_spec(path) -> tuple[str | None, SweepSpec]:
    """Read a JSON sweep config; an optional "kind" key names the study."""
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(d, dict):
        raise InvalidArgument("sweep config must be a JSON object")
    return d.get("kind"), SweepSpec.from_dict(d)


def write_outputs(result: SweepResult, path_prefix: str, svg: bool = False) -> list[str]:
    paths = [f"{path_prefix}.csv", f"{path_prefix}.cells.csv"]
    os.makedirs(os.path.dirname(path_prefix) or ".", exist_ok=True)
    with open(paths[0], "w") as fh:
        fh.write(result.to_csv())
    with open(paths[1], "w") as fh:
        fh.write(result.cells_csv())
    if svg:
        paths.append(f"{path_prefix}.svg")
        plot_svg(result, paths[-1])
    return paths
