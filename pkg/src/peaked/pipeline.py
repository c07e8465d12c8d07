"""
End-to-end construction of a peaked circuit.

Random half, mirror, hidden-string embedding, mirror re-synthesis at the
requested deviation, then U3 merging across block boundaries. Each stage
draws from its own child stream of the seed so stages can be re-run
independently.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .circuit import Circuit, Metadata, build_mirror, generate_random_half
from .errors import InvalidArgument
from .obfuscate import (
    DeviationStats,
    MirrorPlan,
    OptimizerConfig,
    apply_mirror_plan,
    prepare_mirror,
)
from .rewrite import embed_hidden_string, flip_bits, insert_entangler, merge_adjacent_u3


@dataclass(frozen=True)
class PeakedCircuit:
    circuit: Circuit
    hidden: str
    stats: DeviationStats
    peaks: tuple[str, ...]


@dataclass(frozen=True)
class PreparedPipeline:
    """Everything up to the deviation-dependent step, reusable across targets."""

    n_q: int
    n_l: int
    seed: int
    hidden: str
    embedded: Circuit
    plan: MirrorPlan


def _streams(seed: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(5)]


def random_bitstring(n: int, rng: np.random.Generator) -> str:
    return "".join(str(int(b)) for b in rng.integers(0, 2, n))


def prepare_pipeline(
    n_q: int,
    n_l: int,
    seed: int,
    hidden: str | None = None,
    cfg: OptimizerConfig | None = None,
) -> PreparedPipeline:
    half_rng, hid_rng, emb_rng, obf_rng, _ = _streams(seed)
    half = generate_random_half(n_q, n_l, half_rng)
    if hidden is None or hidden == "auto":
        hidden = random_bitstring(n_q, hid_rng)
    full = replace(build_mirror(half), metadata=Metadata(seed=int(seed)))
    embedded = embed_hidden_string(full, hidden, emb_rng)
    plan = prepare_mirror(embedded, obf_rng, cfg)
    return PreparedPipeline(n_q, n_l, int(seed), hidden, embedded, plan)


def finish_pipeline(
    prep: PreparedPipeline,
    delta: float,
    merge: bool = True,
    entangler: tuple[int, int] | None = None,
) -> PeakedCircuit:
    circuit, stats = apply_mirror_plan(prep.plan, delta)
    if merge:
        circuit = merge_adjacent_u3(circuit)
    meta = replace(circuit.metadata or Metadata(), delta_target=float(delta), hidden_string=prep.hidden)
    circuit = replace(circuit, metadata=meta)
    peaks: tuple[str, ...] = (prep.hidden,)
    if entangler is not None:
        ent_rng = _streams(prep.seed)[4]
        circuit = insert_entangler(circuit, entangler, ent_rng)
        peaks = (prep.hidden, flip_bits(prep.hidden, entangler))
    return PeakedCircuit(circuit, prep.hidden, stats, peaks)


def build_peaked_circuit(
    n_q: int,
    n_l: int,
    delta: float,
    hidden: str | None = None,
    seed: int = 0,
    cfg: OptimizerConfig | None = None,
    merge: bool = True,
    entangler: tuple[int, int] | None = None,
) -> PeakedCircuit:
    """Peaked circuit on ``n_q`` qubits with ``n_l`` random layers and mirror deviation ``delta``.

    ``hidden`` defaults to a random string drawn from the seed.
    """
    if delta < 0:
        raise InvalidArgument("delta must be >= 0")
    return finish_pipeline(prepare_pipeline(n_q, n_l, seed, hidden, cfg), delta, merge, entangler)
