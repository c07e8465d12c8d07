import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import phase_distance, ref_apply, ref_block, ref_unitary
from peaked.circuit import (
    Block,
    Circuit,
    FlatCircuit,
    Gate,
    build_mirror,
    circuit_unitary,
    follows_brickwall,
    generate_random_half,
    invert_block,
    layer_pairs,
    mirror_partner_positions,
)
from peaked.errors import InvalidArgument, MalformedBlock, ResourceLimit, UnsupportedLayout
from peaked.linalg import block_matrix


def test_layer_pairs_brickwall():
    assert layer_pairs(4, 0) == [(0, 1), (2, 3)]
    assert layer_pairs(4, 1) == [(3, 0), (1, 2)]
    assert layer_pairs(6, 1) == [(5, 0), (1, 2), (3, 4)]


@pytest.mark.parametrize("n_q,n_l", [(4, 1), (4, 3), (6, 4), (10, 2)])
def test_random_half_shape(n_q, n_l):
    c = generate_random_half(n_q, n_l, np.random.default_rng(1))
    assert c.depth == n_l and c.half_depth == n_l
    assert c.n_blocks == n_q * n_l // 2
    assert follows_brickwall(c)
    for blk in c.blocks():
        assert blk.layout == "cz2" and len(blk.angles) == 6
        assert np.all(np.abs(blk.angle_array()) <= math.pi)


def test_random_half_deterministic():
    a = generate_random_half(6, 3, np.random.default_rng(7))
    b = generate_random_half(6, 3, np.random.default_rng(7))
    assert a == b


@pytest.mark.parametrize("n_q,n_l", [(3, 2), (5, 1), (2, 1), (4, 0)])
def test_random_half_rejects(n_q, n_l):
    with pytest.raises(InvalidArgument):
        generate_random_half(n_q, n_l, np.random.default_rng(0))


def test_malformed_structures():
    ok = Block.from_array((0, 1), np.zeros(18))
    with pytest.raises(MalformedBlock):
        Block.from_array((1, 1), np.zeros(18))
    with pytest.raises(MalformedBlock):
        Block.from_array((0, 1), np.zeros(18), layout="cz9")
    with pytest.raises(MalformedBlock):
        Circuit(4, ((ok, Block.from_array((1, 2), np.zeros(18))),), 1)
    with pytest.raises(MalformedBlock):
        Circuit(4, ((Block.from_array((0, 7), np.zeros(18)),),), 1)


def test_invert_block_is_dagger(rng):
    for _ in range(200):
        b = Block.from_array((0, 1), rng.uniform(-4, 4, 18), phase=rng.uniform(-1, 1))
        m = block_matrix(b)
        assert np.abs(block_matrix(invert_block(b)) - m.conj().T).max() <= 1e-12


def test_invert_block_rejects_other_layouts():
    with pytest.raises(UnsupportedLayout):
        invert_block(Block.from_array((0, 1), np.zeros(24), layout="cz3"))


@pytest.mark.parametrize("n_q,n_l", [(4, 2), (6, 4), (8, 3)])
def test_mirror_is_identity(n_q, n_l):
    half = generate_random_half(n_q, n_l, np.random.default_rng(n_q * n_l))
    c = build_mirror(half)
    assert c.depth == 2 * n_l and c.n_blocks == n_q * n_l
    assert follows_brickwall(c)
    u = circuit_unitary(c)
    assert phase_distance(u, np.eye(2**n_q)) <= 1e-10


def test_mirror_partners_are_inverses():
    c = build_mirror(generate_random_half(6, 3, np.random.default_rng(3)))
    pairs = mirror_partner_positions(c)
    assert len(pairs) == 9
    for (i, j), (k, l) in pairs:
        b1, b2 = c.layers[i][j], c.layers[k][l]
        assert b1.pair == b2.pair
        assert np.abs(block_matrix(b1) @ block_matrix(b2) - np.eye(4)).max() <= 1e-12


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 3), st.integers(1, 3), st.integers(0, 10**6))
def test_unitary_matches_oracle(half_nq, n_l, seed):
    n_q = 2 * half_nq
    c = generate_random_half(n_q, n_l, np.random.default_rng(seed))
    assert np.abs(circuit_unitary(c) - ref_unitary(c)).max() <= 1e-12


def test_wrapping_block_orientation():
    """Block (n-1, 0): qubit n-1 is the high bit of the 4x4 matrix."""
    rng = np.random.default_rng(5)
    b = Block.from_array((3, 0), rng.uniform(-3, 3, 18))
    c = Circuit(4, ((b,),), 1)
    v = np.eye(16, dtype=complex)
    expect = ref_apply(v, ref_block(b.angle_array()), 3, 0, 4)
    assert np.abs(circuit_unitary(c) - expect).max() <= 1e-12


def test_flat_circuit_unitary():
    f = FlatCircuit(2, (Gate("x", (0,)), Gate("cz", (0, 1)), Gate("u3", (1,), (math.pi, 0, math.pi))))
    u = circuit_unitary(f)
    # X on both qubits up to the CZ sign on |11>
    state = u[:, 0]
    assert abs(abs(state[3]) - 1) <= 1e-12


def test_unitary_resource_limit():
    c = generate_random_half(16, 1, np.random.default_rng(0))
    with pytest.raises(ResourceLimit):
        circuit_unitary(c)
