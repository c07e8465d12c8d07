"""
Gate-level rewriting of brick-wall circuits.

The hidden bitstring is planted by putting X gates in front of the circuit and
walking each one forward along its wire. Every identity used on the way is an
exact matrix identity with the phase tracked in the owning block:

    U3(t,p,l) . X      = e^{i(p+l)}  X . U3(t, pi-p, pi-l)       (X moves past a U3)
    U3(t,p,l) . X      = e^{i(l+pi)} U3(pi-t, p-pi, -l)           (X absorbed)
    CZ . X_a           = X_a . Z_b . CZ                           (X moves past a CZ)
    U3(t,p,l) . Z      = U3(t, p, l+pi)                           (Z absorbed)

Products are written in matrix order (rightmost acts first).
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .circuit import Block, Circuit, Metadata
from .errors import InvalidArgument
from .linalg import (
    H,
    H_U3,
    U3Params,
    X,
    Z,
    ZERO_U3,
    cz_matrix,
    distance_up_to_phase,
    kron2,
    u3_matrix,
    zyz_decompose,
)

_I2 = np.eye(2, dtype=complex)


def rule_x_left_of_u3(p: U3Params) -> tuple[U3Params, float]:
    """X . u3(p) = e^{i phase} u3(p') . X  with p' = (t, pi-p, pi-l), phase = p + l."""
    p = U3Params(*p)
    return U3Params(p.theta, math.pi - p.phi, math.pi - p.lam), p.phi + p.lam


def rule_x_right_of_u3(p: U3Params) -> tuple[U3Params, float]:
    """u3(p) . X = e^{i alpha} u3(p'), the X being swallowed by the rotation.

    The relation usually quoted for this case has no X left on the right-hand
    side and the wrong phase under this U3 convention; this one was fitted
    against explicit 2x2 products.
    """
    p = U3Params(*p)
    return U3Params(math.pi - p.theta, p.phi - math.pi, -p.lam), p.lam + math.pi


def rule_x_through_cz(target: int) -> list[tuple[str, int | None]]:
    """Replacement, in time order, for an X on leg ``target`` (0 or 1) followed by CZ.

    The X keeps going on its own leg and leaves a Z behind on the other one.
    """
    if target not in (0, 1):
        raise InvalidArgument("target leg must be 0 or 1")
    return [("cz", None), ("z", 1 - target), ("x", target)]


def absorb_z_into_u3(p: U3Params, side: str) -> U3Params:
    """Z . u3 (side='left') or u3 . Z (side='right') as a single U3, exactly."""
    p = U3Params(*p)
    if side == "left":
        return U3Params(p.theta, p.phi + math.pi, p.lam)
    if side == "right":
        return U3Params(p.theta, p.phi, p.lam + math.pi)
    raise InvalidArgument(f"side must be 'left' or 'right', got {side!r}")


def merge_u3(first: U3Params, second: U3Params) -> tuple[U3Params, float]:
    """Single U3 (plus phase) for ``first`` followed in time by ``second``."""
    return zyz_decompose(u3_matrix(second) @ u3_matrix(first))


# ---------------------------------------------------------------------------
# self-verifying rule registry


@dataclass(frozen=True)
class RewriteRule:
    name: str
    n_params: int
    matcher: Callable[[np.ndarray], np.ndarray]
    producer: Callable[[np.ndarray], np.ndarray]


RULES: dict[str, RewriteRule] = {}


def register_rule(rule: RewriteRule, samples: int = 32, tol: float = 1e-12) -> RewriteRule:
    """Add ``rule`` after checking matcher == producer up to phase on random inputs."""
    rng = np.random.default_rng(zlib.crc32(rule.name.encode()))
    for _ in range(samples):
        v = rng.uniform(-math.pi, math.pi, rule.n_params)
        err = distance_up_to_phase(rule.matcher(v), rule.producer(v))
        if not err <= tol:
            raise InvalidArgument(f"rule {rule.name!r} fails verification (error {err:.3e})")
    RULES[rule.name] = rule
    return rule


def _with_phase(m: np.ndarray, phase: float) -> np.ndarray:
    return np.exp(1j * phase) * m


def _x_left_rhs(v):
    p2, ph = rule_x_left_of_u3(U3Params(*v))
    return _with_phase(u3_matrix(p2) @ X, ph)


def _x_right_rhs(v):
    p2, ph = rule_x_right_of_u3(U3Params(*v))
    return _with_phase(u3_matrix(p2), ph)


def _merge_rhs(v):
    p, ph = merge_u3(U3Params(*v[:3]), U3Params(*v[3:]))
    return _with_phase(u3_matrix(p), ph)


_CZ = cz_matrix()
for _rule in (
    RewriteRule("x-left-of-u3", 3, lambda v: X @ u3_matrix(v), _x_left_rhs),
    RewriteRule("x-right-absorb", 3, lambda v: u3_matrix(v) @ X, _x_right_rhs),
    RewriteRule(
        "x-through-cz-b", 0,
        lambda v: _CZ @ kron2(_I2, X),
        lambda v: kron2(_I2, X) @ kron2(Z, _I2) @ _CZ,
    ),
    RewriteRule(
        "x-through-cz-a", 0,
        lambda v: _CZ @ kron2(X, _I2),
        lambda v: kron2(X, _I2) @ kron2(_I2, Z) @ _CZ,
    ),
    RewriteRule(
        "z-absorb-left", 3,
        lambda v: Z @ u3_matrix(v),
        lambda v: u3_matrix(absorb_z_into_u3(U3Params(*v), "left")),
    ),
    RewriteRule(
        "z-absorb-right", 3,
        lambda v: u3_matrix(v) @ Z,
        lambda v: u3_matrix(absorb_z_into_u3(U3Params(*v), "right")),
    ),
    RewriteRule("u3-merge", 6, lambda v: u3_matrix(v[3:]) @ u3_matrix(v[:3]), _merge_rhs),
):
    register_rule(_rule)


# ---------------------------------------------------------------------------
# mutable working copy used by the circuit transforms


class _Work:
    def __init__(self, c: Circuit):
        self.c = c
        self.angles = [[b.angle_array() for b in layer] for layer in c.layers]
        self.phase = [[b.phase for b in layer] for layer in c.layers]

    def freeze(self, **meta) -> Circuit:
        layers = []
        for i, layer in enumerate(self.c.layers):
            layers.append(
                tuple(
                    Block.from_array(b.pair, self.angles[i][j], b.layout, self.phase[i][j])
                    for j, b in enumerate(layer)
                )
            )
        out = self.c.with_layers(layers)
        if meta:
            base = out.metadata or Metadata()
            out = replace(out, metadata=replace(base, **meta))
        return out

    def get(self, i, j, k) -> U3Params:
        return U3Params(*self.angles[i][j][k])

    def set(self, i, j, k, p: U3Params) -> None:
        self.angles[i][j][k] = p


def _wire_events(c: Circuit, q: int, layers: range):
    """Gates on wire ``q`` in time order: ('u3', i, j, k) or ('cz', i, j, k_other_next)."""
    events = []
    for i in layers:
        for j, blk in enumerate(c.layers[i]):
            if q not in blk.pair:
                continue
            side = blk.pair.index(q)
            k = blk.n_cz
            for layer in range(k + 1):
                events.append(("u3", i, j, 2 * layer + side))
                if layer < k:
                    events.append(("cz", i, j, 2 * (layer + 1) + (1 - side)))
    return events


def _validate_bits(bits: str, n: int) -> None:
    if len(bits) != n or any(ch not in "01" for ch in bits):
        raise InvalidArgument(f"hidden string must be {n} characters of 0/1, got {bits!r}")


def embed_hidden_string(c: Circuit, x_hid: str, rng: np.random.Generator) -> Circuit:
    """Plant X gates for the set bits of ``x_hid`` and hide them in first-half U3s.

    The result satisfies U_out = U_in . X(x_hid) exactly (phases included).
    """
    _validate_bits(x_hid, c.n_q)
    if c.half_depth < 1:
        raise InvalidArgument("circuit has no first half to embed into")
    w = _Work(c)
    for q, bit in enumerate(x_hid):
        if bit != "1":
            continue
        events = _wire_events(c, q, range(c.half_depth))
        stops = [n for n, ev in enumerate(events) if ev[0] == "u3"]
        if not stops:
            raise InvalidArgument(f"qubit {q} has no gates in the first half")
        stop = stops[int(rng.integers(len(stops)))]
        for kind, i, j, k in events[:stop]:
            if kind == "u3":
                p = w.get(i, j, k)
                p2, ph = rule_x_left_of_u3(p)
                w.set(i, j, k, p2)
                w.phase[i][j] += ph
            else:
                # Z left on the partner wire goes into that wire's next U3 in this block
                w.set(i, j, k, absorb_z_into_u3(w.get(i, j, k), "right"))
        _, i, j, k = events[stop]
        p2, ph = rule_x_right_of_u3(w.get(i, j, k))
        w.set(i, j, k, p2)
        w.phase[i][j] += ph
    return w.freeze(hidden_string=x_hid)


def merge_adjacent_u3(c: Circuit) -> Circuit:
    """Fuse U3 pairs that meet across a block boundary on the same wire.

    The product goes into the later block's leading U3; the earlier block's
    trailing U3 becomes the identity so every block keeps its layout.
    """
    w = _Work(c)
    last: dict[int, tuple[int, int, int]] = {}
    for i, layer in enumerate(c.layers):
        for j, blk in enumerate(layer):
            k = blk.n_cz
            for side, q in enumerate(blk.pair):
                if q in last:
                    ei, ej, ek = last[q]
                    p, ph = merge_u3(w.get(ei, ej, ek), w.get(i, j, side))
                    w.set(i, j, side, p)
                    w.phase[i][j] += ph
                    w.set(ei, ej, ek, ZERO_U3)
                last[q] = (i, j, 2 * k + side)
    return w.freeze()


def entangler_matrix() -> np.ndarray:
    """H on both legs, CZ, then H on the second leg: |00> -> (|00> + |11>)/sqrt(2)."""
    return kron2(_I2, H) @ _CZ @ kron2(H, H)


def insert_entangler(c: Circuit, pair: tuple[int, int], rng: np.random.Generator) -> Circuit:
    """Prepend the Bell entangler on ``pair`` and absorb it into the first-layer block.

    The block is promoted to the three-CZ layout. Its two leading rotations
    only ever act on |0>, so their lam angle is free and drawn from ``rng``.
    """
    a, b = pair
    if a == b:
        raise InvalidArgument("entangler needs two distinct qubits")
    if not c.layers:
        raise InvalidArgument("empty circuit")
    slot = next((j for j, blk in enumerate(c.layers[0]) if set(blk.pair) == {a, b}), None)
    if slot is None:
        raise InvalidArgument(f"{pair} is not a first-layer block pair")
    blk = c.layers[0][slot]
    if blk.layout != "cz2":
        raise InvalidArgument("entangler can only be absorbed into a standard block")
    lead = [U3Params(H_U3.theta, H_U3.phi, float(v)) for v in rng.uniform(-math.pi, math.pi, 2)]
    ang = list(blk.angles)
    # the trailing H of the entangler sits on the block's second leg
    merged, ph = zyz_decompose(u3_matrix(ang[1]) @ H)
    new = Block(
        blk.pair,
        (lead[0], lead[1], ang[0], merged, *ang[2:]),
        "cz3",
        blk.phase + ph,
    )
    out = c.replace_block(0, slot, new)
    meta = out.metadata or Metadata()
    extra = dict(meta.extra)
    extra["entangler"] = [int(blk.pair[0]), int(blk.pair[1])]
    return replace(out, metadata=replace(meta, extra=extra))


def flip_bits(bits: str, qubits) -> str:
    out = list(bits)
    for q in qubits:
        out[q] = "1" if out[q] == "0" else "0"
    return "".join(out)
