"""
Command-line front end.

    peaked generate --nq 6 --nl 4 --delta 0.003 --hidden auto --seed 1 --out c.json
    peaked verify c.json 010011

Exit status: 0 success, 1 verify mismatch, 2 invalid input, 3 resource limit.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import replace

import numpy as np

from .circuit import Circuit, FlatCircuit, follows_brickwall
from .errors import (
    InvalidArgument,
    MalformedBlock,
    ParseError,
    PeakedError,
    ReductionFailure,
    ResourceLimit,
    SynthesisFailure,
    UnsupportedGate,
    UnsupportedLayout,
)
from .mps import ABOVE_MAX, find_chi_threshold, mps_run, mps_sample
from .obfuscate import OptimizerConfig, mirror_symmetry_report, shrink_tail
from .pipeline import build_peaked_circuit
from .rewrite import insert_entangler
from .serialize import from_json, from_qasm, to_json, to_qasm
from .statevector import bitstring_to_index, distribution, peak_report, probabilities, run, sample
from .sweeps import KINDS, load_spec, run_sweep, write_outputs

log = logging.getLogger("peaked")

EXIT_OK, EXIT_MISMATCH, EXIT_INVALID, EXIT_RESOURCE = 0, 1, 2, 3
HIGH_TRUNCATION = 1e-3


def _load(path: str):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise InvalidArgument(f"cannot read {path}: {exc.strerror}") from None
    if path.endswith(".qasm") or data.lstrip().startswith(b"OPENQASM"):
        return from_qasm(data)
    return from_json(data)


def _write(path: str, data: bytes) -> None:
    with open(path, "wb") as fh:
        fh.write(data)


def _emit(obj) -> None:
    print(json.dumps(_clean(obj), indent=1))


def _clean(v):
    """JSON-safe copy: numpy scalars unwrapped, infinities written as "inf"."""
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "inf" if math.isinf(v) else v
    return v


def _bits(text: str, n: int, what: str = "hidden string") -> str:
    if len(text) != n or any(ch not in "01" for ch in text):
        raise InvalidArgument(f"{what} must be {n} characters of 0/1, got {text!r}")
    return text


def _pair(text: str) -> tuple[int, int]:
    try:
        a, b = (int(v) for v in text.split(","))
    except ValueError:
        raise InvalidArgument(f"pair must look like 'a,b', got {text!r}") from None
    return a, b


def _optimizer(args) -> OptimizerConfig:
    if getattr(args, "optimizer_config", None):
        with open(args.optimizer_config) as fh:
            return OptimizerConfig.from_dict(json.load(fh))
    return OptimizerConfig()


# -- subcommands ---------------------------------------------------------------


def cmd_generate(args) -> int:
    if args.hidden != "auto":
        _bits(args.hidden, args.nq)
    res = build_peaked_circuit(
        args.nq, args.nl, args.delta, None if args.hidden == "auto" else args.hidden,
        args.seed, _optimizer(args),
    )
    c = res.circuit
    if args.out:
        _write(args.out, to_json(c))
    if args.qasm:
        _write(args.qasm, to_qasm(c))
    if args.challenge:
        os.makedirs(args.challenge, exist_ok=True)
        _write(os.path.join(args.challenge, "circuit.qasm"), to_qasm(c))
        _write(os.path.join(args.challenge, "circuit.json"), to_json(c, include_metadata=False))
        if args.answer:
            _write(args.answer, (res.hidden + "\n").encode())
    _emit({
        "n_q": c.n_q, "depth": c.depth, "blocks": c.n_blocks,
        "delta_mean": res.stats.mean, "delta_max": res.stats.max,
        "out": args.out, "challenge": args.challenge,
    })
    return EXIT_OK


def cmd_inspect(args) -> int:
    c = _load(args.circuit)
    if isinstance(c, FlatCircuit):
        _emit({"n_q": c.n_q, "kind": "flat", "gates": len(c.gates)})
        return EXIT_OK
    layouts: dict[str, int] = {}
    for b in c.blocks():
        layouts[b.layout] = layouts.get(b.layout, 0) + 1
    sym = mirror_symmetry_report(c)
    devs = [s.deviation for s in sym]
    _emit({
        "n_q": c.n_q, "depth": c.depth, "half_depth": c.half_depth, "blocks": c.n_blocks,
        "layouts": layouts, "brickwall": follows_brickwall(c),
        "has_metadata": c.metadata is not None,
        "symmetry": {
            "pairs": len(sym),
            "exact_pairs": sum(d <= 1e-12 for d in devs),
            "min_deviation": min(devs) if devs else None,
            "median_deviation": float(np.median(devs)) if devs else None,
        },
    })
    return EXIT_OK


def cmd_simulate(args) -> int:
    c = _load(args.circuit)
    rng = np.random.default_rng(args.seed)
    extra = {}
    if args.backend == "direct":
        state = run(c, max_qubits=args.max_qubits)
        if args.shots:
            rep = peak_report(sample(state, args.shots, rng), args.threshold)
        else:
            rep = peak_report(state, args.threshold)
        top = sorted(distribution(state).items(), key=lambda kv: (-kv[1], kv[0]))[: args.top]
    else:
        chi = args.chi or 2 ** (c.n_q // 2)
        m = mps_run(c, chi)
        counts = mps_sample(m, args.shots or 100_000, rng)
        rep = peak_report(counts, args.threshold, backend="mps")
        total = sum(counts.values())
        top = sorted(((k, v / total) for k, v in counts.items()), key=lambda kv: (-kv[1], kv[0]))[: args.top]
        extra = {"chi": chi, "truncation": m.cumulative_truncation,
                 "high_truncation": m.cumulative_truncation > HIGH_TRUNCATION,
                 "max_bond": m.max_bond}
    out = {**rep.to_dict(), **extra, "top": [[k, v] for k, v in top]}
    _emit(out)
    return EXIT_OK


def cmd_attack(args) -> int:
    c = _load(args.circuit)
    chi_max = 2 ** (c.n_q // 2)
    if args.chi:
        chi = args.chi
    else:
        res = find_chi_threshold(c, None, args.threshold, args.shots, args.seed)
        chi = chi_max if res.chi_th == ABOVE_MAX else res.chi_th
    m = mps_run(c, chi)
    reps = [
        peak_report(mps_sample(m, args.shots, np.random.default_rng([args.seed, k])),
                    args.threshold, backend="mps")
        for k in (0, 1)
    ]
    found = all(r.is_peaked for r in reps) and reps[0].peak_string == reps[1].peak_string
    _emit({
        "found_string": reps[0].peak_string if found else None,
        "chi_used": chi, "ratio": reps[0].ratio, "shots": args.shots,
        "truncation": m.cumulative_truncation,
    })
    return EXIT_OK


def _hidden_of(c: Circuit, given: str | None) -> str:
    if given:
        return _bits(given, c.n_q)
    if c.metadata is None or not c.metadata.hidden_string:
        raise InvalidArgument("no hidden string given and none in the circuit metadata")
    return c.metadata.hidden_string


def cmd_shrink(args) -> int:
    c = _load(args.circuit)
    if isinstance(c, FlatCircuit):
        raise InvalidArgument("shrinking needs a block-structured circuit")
    x = _hidden_of(c, args.hidden)
    rng = np.random.default_rng(args.seed)
    cfg = _optimizer(args)
    if args.row_tolerance:
        cfg = replace(cfg, row_tolerance=args.row_tolerance)
    reports = []
    for _ in range(args.passes):
        c, rep = shrink_tail(c, x, rng, cfg, args.mode)
        reports.append({
            "mode": rep.mode, "row_errors": list(rep.row_errors),
            "removed_layers": rep.removed_layers, "removed_blocks": rep.removed_blocks,
            "p_before": rep.p_peak_before, "p_after": rep.p_peak_after,
            "ratio_before": rep.ratio_before, "ratio_after": rep.ratio_after,
        })
    if args.out:
        _write(args.out, to_json(c))
    _emit({"depth": c.depth, "passes": reports})
    return EXIT_OK


def cmd_double_peak(args) -> int:
    c = _load(args.circuit)
    if isinstance(c, FlatCircuit):
        raise InvalidArgument("entangler insertion needs a block-structured circuit")
    pair = _pair(args.pair)
    c = insert_entangler(c, pair, np.random.default_rng(args.seed))
    if args.out:
        _write(args.out, to_json(c))
    out = {"pair": list(pair), "first_layout": c.layers[0][0].layout}
    if c.n_q <= args.max_qubits:
        top = sorted(distribution(run(c)).items(), key=lambda kv: -kv[1])[:3]
        out["top"] = [[k, v] for k, v in top]
    _emit(out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    kind_cfg, spec = load_spec(args.config)
    kind = args.kind or kind_cfg
    if kind not in KINDS:
        raise InvalidArgument(f"sweep kind must be one of {KINDS}")
    if args.workers:
        spec = replace(spec, workers=args.workers)
    if args.no_wall_time:
        spec = replace(spec, record_wall_time=False)
    result = run_sweep(kind, spec)
    paths = write_outputs(result, args.out, svg=args.svg)
    for f in result.failures:
        log.warning("cell failure n_q=%d n_l=%d seed=%d: %s", *f)
    _emit({"kind": kind, "rows": len(result.rows), "failures": len(result.failures),
           "outputs": paths})
    return EXIT_OK


def cmd_verify(args) -> int:
    c = _load(args.circuit)
    claim = _bits(args.claim, c.n_q, "claimed string")
    state = run(c, max_qubits=args.max_qubits)
    rep = peak_report(state, args.threshold)
    p = probabilities(state)
    ok = rep.peak_string == claim
    _emit({"match": ok, "claim": claim, "peak_string": rep.peak_string,
           "p_claim": float(p[bitstring_to_index(claim)]), "ratio": rep.ratio,
           "is_peaked": rep.is_peaked})
    return EXIT_OK if ok else EXIT_MISMATCH


# -- argument parsing ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="peaked", description="Peaked brick-wall circuit toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="build a peaked circuit")
    p.add_argument("--nq", type=int, required=True)
    p.add_argument("--nl", type=int, required=True)
    p.add_argument("--delta", type=float, default=0.003)
    p.add_argument("--hidden", default="auto", help="bitstring (qubit 0 first) or 'auto'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="circuit JSON with metadata")
    p.add_argument("--qasm", help="also write QASM here")
    p.add_argument("--challenge", metavar="DIR", help="write circuit.qasm/json without metadata")
    p.add_argument("--answer", help="file for the hidden string (keep away from the challenge)")
    p.add_argument("--optimizer-config", help="JSON optimizer settings")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("inspect", help="structure and mirror-symmetry report")
    p.add_argument("circuit")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("simulate", help="exact or sampled output distribution")
    p.add_argument("circuit")
    p.add_argument("--backend", choices=("direct", "mps"), default="direct")
    p.add_argument("--chi", type=int)
    p.add_argument("--shots", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=10.0)
    p.add_argument("--top", type=int, default=5)
    p.add_argument("--max-qubits", type=int, default=20)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("attack", help="MPS recovery of an unknown peak")
    p.add_argument("circuit")
    p.add_argument("--chi", type=int, help="bond cap; searched when omitted")
    p.add_argument("--shots", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=10.0)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("shrink", help="remove trailing mirror layers")
    p.add_argument("circuit")
    p.add_argument("--hidden", help="defaults to the circuit metadata")
    p.add_argument("--mode", choices=("auto", "tail", "pyramid"), default="auto")
    p.add_argument("--passes", type=int, default=1)
    p.add_argument("--row-tolerance", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--optimizer-config")
    p.set_defaults(func=cmd_shrink)

    p = sub.add_parser("double-peak", help="absorb a Bell entangler into the first layer")
    p.add_argument("circuit")
    p.add_argument("--pair", required=True, help="first-layer pair, e.g. 0,1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--max-qubits", type=int, default=20)
    p.set_defaults(func=cmd_double_peak)

    p = sub.add_parser("sweep", help="run one of the parameter studies")
    p.add_argument("kind", nargs="?", choices=KINDS)
    p.add_argument("--config", required=True, help="JSON sweep settings")
    p.add_argument("--out", required=True, help="output path prefix")
    p.add_argument("--svg", action="store_true")
    p.add_argument("--workers", type=int)
    p.add_argument("--no-wall-time", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="check a claimed peak string exactly")
    p.add_argument("circuit")
    p.add_argument("claim")
    p.add_argument("--threshold", type=float, default=10.0)
    p.add_argument("--max-qubits", type=int, default=20)
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ResourceLimit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (InvalidArgument, MalformedBlock, ParseError, UnsupportedGate, UnsupportedLayout,
            SynthesisFailure, ReductionFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except PeakedError as exc:  # pragma: no cover - any other library error
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
