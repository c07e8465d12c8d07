"""Independent reference implementations used as test oracles.

Nothing here calls into the package's matrix code: gates are written out by
hand and circuits are applied with plain index arithmetic.
"""

import cmath
import math

import numpy as np
import pytest


def ref_u3(theta, phi, lam):
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array(
        [[c, -cmath.exp(1j * lam) * s], [cmath.exp(1j * phi) * s, cmath.exp(1j * (phi + lam)) * c]]
    )


REF_CZ = np.diag([1, 1, 1, -1]).astype(complex)
REF_X = np.array([[0, 1], [1, 0]], dtype=complex)
REF_Z = np.array([[1, 0], [0, -1]], dtype=complex)
REF_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
CZ_COUNT = {"cz2": 2, "cz3": 3, "red": 1}


def ref_block(angles, layout="cz2", phase=0.0):
    """Brute-force 4x4 product: kron of U3 pairs interleaved with CZ."""
    a = np.asarray(angles, dtype=float).reshape(-1, 3)
    k = CZ_COUNT[layout]
    assert len(a) == 2 * (k + 1)
    m = np.eye(4, dtype=complex)
    for layer in range(k + 1):
        if layer:
            m = REF_CZ @ m
        m = np.kron(ref_u3(*a[2 * layer]), ref_u3(*a[2 * layer + 1])) @ m
    return cmath.exp(1j * phase) * m


def ref_apply(v, m, a, b, n):
    """Apply a 4x4 ``m`` (qubit a = high bit) to the rows of ``v`` (little-endian)."""
    idx = np.arange(2**n)
    ba, bb = (idx >> a) & 1, (idx >> b) & 1
    base = idx & ~((1 << a) | (1 << b))
    loc = 2 * ba + bb
    out = np.zeros_like(v)
    for src in range(4):
        sa, sb = src >> 1, src & 1
        src_idx = base | (sa << a) | (sb << b)
        out += m[loc, src][:, None] * v[src_idx] if v.ndim == 2 else m[loc, src] * v[src_idx]
    return out


def ref_unitary(c):
    n = c.n_q
    u = np.eye(2**n, dtype=complex)
    for blk in c.blocks():
        u = ref_apply(u, ref_block(blk.angle_array(), blk.layout, blk.phase), *blk.pair, n)
    return u


def ref_state(c):
    n = c.n_q
    v = np.zeros(2**n, dtype=complex)
    v[0] = 1
    for blk in c.blocks():
        v = ref_apply(v, ref_block(blk.angle_array(), blk.layout, blk.phase), *blk.pair, n)
    return v


def x_layer(bits):
    """Permutation |i> -> |i xor mask> for the X gates on the set bits (qubit 0 first)."""
    n = len(bits)
    mask = sum(1 << q for q, ch in enumerate(bits) if ch == "1")
    p = np.zeros((2**n, 2**n))
    for i in range(2**n):
        p[i ^ mask, i] = 1
    return p


def phase_distance(u1, u2):
    """min_a ||u1 - e^{ia} u2||_F via the closed-form phase."""
    ip = np.vdot(u2, u1)
    a = cmath.phase(ip) if abs(ip) else 0.0
    return float(np.linalg.norm(u1 - cmath.exp(1j * a) * u2))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
