"""
Brick-wall circuit data model.

A :class:`Circuit` is an ordered list of layers, each a tuple of :class:`Block`
objects on disjoint qubit pairs. Layer ``i`` (0-based) of the random half uses
pairs ``(0,1), (2,3), ...`` when ``i`` is even and the shifted ring pairing
``(n-1,0), (1,2), (3,4), ...`` when ``i`` is odd. Mirror layers copy the pattern
of the first-half layer they invert.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np

from .errors import InvalidArgument, MalformedBlock, ResourceLimit, UnsupportedLayout
from .linalg import (
    LAYOUT_CZ,
    STANDARD,
    U3Params,
    X,
    block_matrix,
    cz_matrix,
    n_u3,
    u3_matrix,
)


@dataclass(frozen=True)
class Block:
    pair: tuple[int, int]
    angles: tuple[U3Params, ...]
    layout: str = STANDARD
    phase: float = 0.0

    def __post_init__(self):
        a, b = (int(q) for q in self.pair)
        if a == b or a < 0 or b < 0:
            raise MalformedBlock(f"bad qubit pair {self.pair!r}")
        object.__setattr__(self, "pair", (a, b))
        if self.layout not in LAYOUT_CZ:
            raise MalformedBlock(f"unknown layout {self.layout!r}")
        angles = tuple(U3Params(*(float(v) for v in p)) for p in self.angles)
        if len(angles) != n_u3(self.layout):
            raise MalformedBlock(
                f"layout {self.layout!r} needs {n_u3(self.layout)} U3 gates, got {len(angles)}"
            )
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "phase", float(self.phase))

    @classmethod
    def from_array(cls, pair, arr, layout: str = STANDARD, phase: float = 0.0) -> "Block":
        arr = np.asarray(arr, dtype=float).reshape(-1, 3)
        return cls(pair, tuple(U3Params(*row) for row in arr.tolist()), layout, phase)

    @property
    def n_cz(self) -> int:
        return LAYOUT_CZ[self.layout]

    def angle_array(self) -> np.ndarray:
        return np.array(self.angles, dtype=float)

    def matrix(self) -> np.ndarray:
        return block_matrix(self)

    def qubits(self) -> tuple[int, int]:
        return self.pair


@dataclass(frozen=True)
class Metadata:
    hidden_string: str | None = None
    delta_target: float | None = None
    seed: int | None = None
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Circuit:
    n_q: int
    layers: tuple[tuple[Block, ...], ...]
    half_depth: int
    metadata: Metadata | None = None

    def __post_init__(self):
        if self.n_q < 2 or self.n_q % 2:
            raise InvalidArgument(f"n_q must be even and >= 2, got {self.n_q}")
        layers = tuple(tuple(layer) for layer in self.layers)
        for i, layer in enumerate(layers):
            seen: set[int] = set()
            for blk in layer:
                for q in blk.pair:
                    if q >= self.n_q:
                        raise MalformedBlock(f"layer {i}: qubit {q} out of range")
                    if q in seen:
                        raise MalformedBlock(f"layer {i}: qubit {q} used twice")
                    seen.add(q)
        object.__setattr__(self, "layers", layers)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def n_blocks(self) -> int:
        return sum(len(layer) for layer in self.layers)

    def blocks(self) -> list[Block]:
        return [b for layer in self.layers for b in layer]

    def positions(self) -> list[tuple[int, int]]:
        return [(i, j) for i, layer in enumerate(self.layers) for j in range(len(layer))]

    def first_half(self) -> tuple[tuple[Block, ...], ...]:
        return self.layers[: self.half_depth]

    def mirror_half(self) -> tuple[tuple[Block, ...], ...]:
        return self.layers[self.half_depth :]

    def without_metadata(self) -> "Circuit":
        return replace(self, metadata=None)

    def with_layers(self, layers) -> "Circuit":
        return replace(self, layers=tuple(tuple(layer) for layer in layers))

    def replace_block(self, layer: int, slot: int, block: Block) -> "Circuit":
        layers = [list(lay) for lay in self.layers]
        layers[layer][slot] = block
        return self.with_layers(layers)

    def operations(self) -> Iterator[tuple[tuple[int, ...], np.ndarray]]:
        for blk in self.blocks():
            yield blk.pair, block_matrix(blk)


@dataclass(frozen=True)
class Gate:
    name: str
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()


@dataclass(frozen=True)
class FlatCircuit:
    """Gate-list circuit used when imported QASM has no recognisable brick structure."""

    n_q: int
    gates: tuple[Gate, ...]
    metadata: Metadata | None = None

    def operations(self) -> Iterator[tuple[tuple[int, ...], np.ndarray]]:
        cz = cz_matrix()
        for g in self.gates:
            if g.name == "u3":
                yield g.qubits, u3_matrix(g.params)
            elif g.name == "x":
                yield g.qubits, X
            elif g.name == "cz":
                yield g.qubits, cz
            else:
                raise InvalidArgument(f"unknown gate {g.name!r}")


def layer_pairs(n_q: int, index: int) -> list[tuple[int, int]]:
    """Brick pairs for first-half layer ``index`` (0-based)."""
    if index % 2 == 0:
        return [(q, q + 1) for q in range(0, n_q, 2)]
    return [(n_q - 1, 0)] + [(q, q + 1) for q in range(1, n_q - 1, 2)]


def expected_pairs(c: Circuit, index: int) -> list[tuple[int, int]]:
    """Pair pattern a layer at ``index`` must follow, mirror layers included."""
    h = c.half_depth
    source = index if index < h else 2 * h - 1 - index
    return layer_pairs(c.n_q, source)


def follows_brickwall(c: Circuit) -> bool:
    for i, layer in enumerate(c.layers):
        want = {frozenset(p) for p in expected_pairs(c, i)}
        got = {frozenset(b.pair) for b in layer}
        if got != want:
            return False
    return True


def random_u3_angles(rng: np.random.Generator, count: int) -> np.ndarray:
    # -U[-pi, pi) lands in (-pi, pi]
    return -rng.uniform(-math.pi, math.pi, size=(count, 3))


def generate_random_half(n_q: int, n_l: int, rng: np.random.Generator) -> Circuit:
    """Random brick-wall circuit Q with n_l layers and N = n_q * n_l / 2 blocks."""
    if n_q < 4 or n_q % 2:
        raise InvalidArgument(f"n_q must be even and >= 4, got {n_q}")
    if n_l < 1:
        raise InvalidArgument(f"n_l must be >= 1, got {n_l}")
    layers = []
    for i in range(n_l):
        layers.append(
            tuple(Block.from_array(p, random_u3_angles(rng, 6)) for p in layer_pairs(n_q, i))
        )
    return Circuit(n_q, tuple(layers), half_depth=n_l)


def invert_u3(p: U3Params) -> U3Params:
    return U3Params(-p.theta, -p.lam, -p.phi)


def invert_block(b: Block) -> Block:
    """Block whose matrix is block_matrix(b)^dagger, in the same (palindromic) layout."""
    if b.layout != STANDARD:
        raise UnsupportedLayout(f"cannot invert layout {b.layout!r}")
    k = b.n_cz
    out: list[U3Params] = [None] * len(b.angles)  # type: ignore[list-item]
    for layer in range(k + 1):
        for side in (0, 1):
            out[2 * (k - layer) + side] = invert_u3(b.angles[2 * layer + side])
    return Block(b.pair, tuple(out), b.layout, -b.phase)


def build_mirror(half: Circuit) -> Circuit:
    """Q followed by Q^-1: inverted blocks with layer order and slot order reversed."""
    if half.depth != half.half_depth:
        raise InvalidArgument("build_mirror expects a bare random half")
    mirror = [tuple(invert_block(b) for b in reversed(layer)) for layer in reversed(half.layers)]
    return replace(half, layers=half.layers + tuple(mirror))


def mirror_partner_positions(c: Circuit) -> list[tuple[tuple[int, int], tuple[int, int]]]:
    """(first-half position, mirror position) pairs: block i against block 2N+1-i."""
    pos = c.positions()
    n_first = sum(len(layer) for layer in c.first_half())
    return [(pos[i], pos[len(pos) - 1 - i]) for i in range(min(n_first, len(pos) - n_first))]


def circuit_unitary(c: Circuit | FlatCircuit, max_qubits: int = 14) -> np.ndarray:
    """Dense 2^n x 2^n unitary (little-endian basis) as an ordered product of operations."""
    from .statevector import apply_operation

    n = c.n_q
    if n > max_qubits:
        raise ResourceLimit(f"dense unitary limited to {max_qubits} qubits, got {n}")
    dim = 2**n
    # columns ride along as a trailing batch axis
    t = np.eye(dim, dtype=complex).reshape((2,) * n + (dim,))
    for qubits, mat in c.operations():
        t = apply_operation(t, mat, qubits, n)
    return t.reshape(dim, dim)


def block_unitary_on(blocks: Sequence[Block], qubits: Sequence[int]) -> np.ndarray:
    """Dense matrix of blocks (in time order) restricted to ``qubits``.

    Local index bit ``k`` corresponds to ``qubits[k]``.
    """
    from .statevector import apply_operation

    loc = {q: k for k, q in enumerate(qubits)}
    n = len(qubits)
    dim = 2**n
    t = np.eye(dim, dtype=complex).reshape((2,) * n + (dim,))
    for blk in blocks:
        t = apply_operation(t, block_matrix(blk), (loc[blk.pair[0]], loc[blk.pair[1]]), n)
    return t.reshape(dim, dim)
