import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ref_block, ref_u3
from peaked.circuit import Block
from peaked.errors import InvalidArgument, MalformedBlock
from peaked.linalg import (
    H,
    X,
    U3Params,
    block_matrix,
    cz_matrix,
    deviation,
    distance_up_to_phase,
    haar_unitary,
    layout_matrix,
    normalize_angle,
    u3_matrix,
    unitarity_error,
    zyz_decompose,
)

angle = st.floats(-50, 50, allow_nan=False)


def test_u3_examples():
    assert np.allclose(u3_matrix((0, 0, 0)), np.eye(2), atol=1e-15)
    assert np.allclose(u3_matrix((math.pi, 0, math.pi)), [[0, 1], [1, 0]], atol=1e-15)
    assert np.allclose(u3_matrix((math.pi / 2, 0, math.pi)), H, atol=1e-15)


def test_u3_rejects_non_finite():
    for bad in (math.nan, math.inf, -math.inf):
        with pytest.raises(InvalidArgument):
            u3_matrix((0.1, bad, 0.2))


@given(angle, angle, angle)
def test_u3_unitary_and_matches_formula(t, p, l):
    u = u3_matrix((t, p, l))
    assert unitarity_error(u) <= 1e-12
    assert np.abs(u - ref_u3(t, p, l)).max() <= 1e-12


@given(angle, angle, angle)
def test_u3_inverse_rule(t, p, l):
    assert np.abs(u3_matrix((-t, -l, -p)) - u3_matrix((t, p, l)).conj().T).max() <= 1e-12


def test_cz():
    cz = cz_matrix()
    assert np.array_equal(cz, np.diag([1, 1, 1, -1]))
    assert np.array_equal(cz @ cz, np.eye(4))
    swap = np.eye(4)[[0, 2, 1, 3]]
    assert np.array_equal(swap @ cz @ swap, cz)


def test_zero_block_is_identity():
    b = Block.from_array((0, 1), np.zeros(18))
    assert np.abs(block_matrix(b) - np.eye(4)).max() == 0


def test_block_with_leading_x_matches_brute_force():
    angles = np.zeros(18)
    angles[:3] = (math.pi, 0, math.pi)
    m = block_matrix(Block.from_array((0, 1), angles))
    assert np.abs(m - ref_block(angles)).max() <= 1e-15
    # first gate is X on qubit a, everything else identity: CZ.CZ cancels
    assert np.allclose(m, np.kron(X, np.eye(2)), atol=1e-15)


@pytest.mark.parametrize("layout", ["cz2", "cz3", "red"])
def test_block_matrix_matches_oracle(rng, layout):
    for _ in range(50):
        k = {"cz2": 18, "cz3": 24, "red": 12}[layout]
        a = rng.uniform(-math.pi, math.pi, k)
        ph = rng.uniform(-3, 3)
        m = layout_matrix(layout, a, ph)
        assert np.abs(m - ref_block(a, layout, ph)).max() <= 1e-13
        assert unitarity_error(m) <= 1e-10 * 4


def test_block_angle_count_mismatch():
    with pytest.raises(MalformedBlock):
        layout_matrix("cz2", np.zeros(15))
    with pytest.raises(MalformedBlock):
        Block.from_array((0, 1), np.zeros(24), "cz2")


def test_two_parameter_sets_one_matrix(rng):
    """Two unrelated angle sets can describe (almost) the same block."""
    from peaked.obfuscate import resynthesize_block

    s1 = rng.uniform(-math.pi, math.pi, 18)
    m1 = layout_matrix("cz2", s1)
    res = resynthesize_block(m1, 0.0, rng, original=s1)
    assert deviation(block_matrix(res.block), m1) <= 1e-9
    assert res.param_distance >= 0.5


def test_deviation_examples():
    m = haar_unitary(4, np.random.default_rng(0))
    assert deviation(m, m) == 0
    assert deviation(np.eye(4), cz_matrix()) == pytest.approx(0.5, abs=1e-15)


def test_deviation_against_double_loop(rng):
    for _ in range(20):
        a, b = haar_unitary(4, rng), haar_unitary(4, rng)
        total = 0.0
        for i in range(4):
            for j in range(4):
                d = a[i, j] - b[i, j]
                total += d.real * d.real + d.imag * d.imag
        assert abs(deviation(a, b) - math.sqrt(total / 16)) <= 1e-14


def test_deviation_metric_properties(rng):
    for _ in range(50):
        a, b, c = (haar_unitary(4, rng) for _ in range(3))
        assert deviation(a, b) == pytest.approx(deviation(b, a), abs=1e-15)
        assert deviation(a, c) <= deviation(a, b) + deviation(b, c) + 1e-12


def test_deviation_shape_mismatch():
    with pytest.raises(InvalidArgument):
        deviation(np.eye(4), np.eye(2))


def test_zyz_examples():
    p, a = zyz_decompose(X)
    assert p == U3Params(math.pi, 0.0, math.pi) and a == 0.0
    p, a = zyz_decompose(np.eye(2))
    assert p == U3Params(0.0, 0.0, 0.0) and a == 0.0


def test_zyz_recomposes_haar(rng):
    for _ in range(1000):
        u = haar_unitary(2, rng)
        p, a = zyz_decompose(u)
        assert 0 <= p.theta <= math.pi
        assert np.linalg.norm(np.exp(1j * a) * u3_matrix(p) - u) <= 1e-10


@given(angle, angle, angle)
@settings(max_examples=200)
def test_zyz_of_u3_is_identity_on_matrices(t, p, l):
    u = u3_matrix((t, p, l))
    q, a = zyz_decompose(u)
    assert np.linalg.norm(np.exp(1j * a) * u3_matrix(q) - u) <= 1e-10


def test_zyz_rejects_non_unitary():
    with pytest.raises(InvalidArgument):
        zyz_decompose(np.array([[1, 1], [0, 1]], dtype=complex))


def test_distance_up_to_phase_examples(rng):
    u = haar_unitary(4, rng)
    assert distance_up_to_phase(u, np.exp(1.3j) * u) <= 1e-12
    assert distance_up_to_phase(np.eye(2), X) == pytest.approx(2.0, abs=1e-15)


def test_distance_up_to_phase_against_grid_scan(rng):
    grid = np.exp(1j * np.linspace(0, 2 * math.pi, 10_000, endpoint=False))
    for _ in range(10):
        a, b = haar_unitary(3, rng), haar_unitary(3, rng)
        d = distance_up_to_phase(a, b)
        scan = min(np.linalg.norm(a - g * b) for g in grid)
        assert d <= scan + 1e-12
        assert d >= scan - 1e-3
        assert d <= np.linalg.norm(a - b) + 1e-12


@given(st.floats(-1e6, 1e6, allow_nan=False))
def test_normalize_angle_range_and_idempotent(x):
    y = normalize_angle(x)
    assert -math.pi < y <= math.pi
    assert normalize_angle(y) == y


@given(angle, angle, angle)
def test_normalized_params_keep_the_matrix(t, p, l):
    q, ph = U3Params(t, p, l).normalized()
    assert np.abs(np.exp(1j * ph) * u3_matrix(q) - u3_matrix((t, p, l))).max() <= 1e-11
