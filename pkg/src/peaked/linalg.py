"""
Dense linear algebra for two-qubit bricks.

U3 convention (top-left entry real and nonnegative for theta in [0, pi])::

    u3(theta, phi, lam) = [[cos(theta/2),            -exp(i lam) sin(theta/2)],
                           [exp(i phi) sin(theta/2),  exp(i(phi+lam)) cos(theta/2)]]

Two-qubit matrices act on the ordered pair (a, b) with ``a`` as the high bit,
i.e. ``kron(U_a, U_b)``.
"""

from __future__ import annotations

import cmath
import math
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InvalidArgument, MalformedBlock

TAU = 2.0 * math.pi

X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2.0)
SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)
_CZ_DIAG = np.array([1.0, 1.0, 1.0, -1.0])

# layout tag -> number of CZ gates; a layout with k CZs interleaves k+1 U3 layers
LAYOUT_CZ = {"cz2": 2, "cz3": 3, "red": 1}
STANDARD = "cz2"


class U3Params(NamedTuple):
    theta: float
    phi: float
    lam: float

    def normalized(self) -> tuple["U3Params", float]:
        """Angles wrapped into (-pi, pi] plus the global phase the wrap introduces.

        phi and lam are 2*pi periodic. theta is 4*pi periodic, so an odd number
        of 2*pi shifts flips the sign of the matrix; that sign comes back as a
        phase of pi.
        """
        theta, shifts = _wrap_with_count(self.theta)
        phase = math.pi if shifts % 2 else 0.0
        return U3Params(theta, normalize_angle(self.phi), normalize_angle(self.lam)), phase


ZERO_U3 = U3Params(0.0, 0.0, 0.0)
H_U3 = U3Params(math.pi / 2, 0.0, math.pi)


def normalize_angle(x: float) -> float:
    """Wrap into (-pi, pi]; idempotent on already-wrapped values."""
    return _wrap_with_count(x)[0]


def _wrap_with_count(x: float) -> tuple[float, int]:
    x = float(x)
    if not math.isfinite(x):
        raise InvalidArgument(f"non-finite angle {x!r}")
    r = math.remainder(x, TAU)
    if r <= -math.pi:
        r = math.pi
    return r, round((x - r) / TAU)


def _check_finite(values) -> None:
    if not all(math.isfinite(v) for v in values):
        raise InvalidArgument(f"non-finite angle in {tuple(values)!r}")


def u3_matrix(p: Sequence[float]) -> np.ndarray:
    theta, phi, lam = (float(v) for v in p)
    _check_finite((theta, phi, lam))
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array(
        [
            [c, -cmath.exp(1j * lam) * s],
            [cmath.exp(1j * phi) * s, cmath.exp(1j * (phi + lam)) * c],
        ]
    )


def u3_stack(angles: np.ndarray) -> np.ndarray:
    """Vectorised ``u3_matrix`` over an (k, 3) array; returns (k, 2, 2)."""
    angles = np.asarray(angles, dtype=float).reshape(-1, 3)
    theta, phi, lam = angles[:, 0], angles[:, 1], angles[:, 2]
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    out = np.empty((len(angles), 2, 2), dtype=complex)
    out[:, 0, 0] = c
    out[:, 0, 1] = -np.exp(1j * lam) * s
    out[:, 1, 0] = np.exp(1j * phi) * s
    out[:, 1, 1] = np.exp(1j * (phi + lam)) * c
    return out


def cz_matrix() -> np.ndarray:
    return np.diag(_CZ_DIAG).astype(complex)


def kron2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (a[:, None, :, None] * b[None, :, None, :]).reshape(4, 4)


def n_u3(layout: str) -> int:
    try:
        return 2 * (LAYOUT_CZ[layout] + 1)
    except KeyError:
        raise MalformedBlock(f"unknown layout {layout!r}") from None


def layout_matrix(layout: str, angles, phase: float = 0.0) -> np.ndarray:
    """Matrix of a CZ-ladder brick: U3 pair, then (CZ, U3 pair) repeated.

    ``angles`` holds the U3 triples in time order, alternating qubit a / qubit b.
    Later gates multiply from the left.
    """
    flat = np.asarray(angles, dtype=float).reshape(-1, 3)
    if len(flat) != n_u3(layout):
        raise MalformedBlock(
            f"layout {layout!r} needs {n_u3(layout)} U3 gates, got {len(flat)}"
        )
    if not np.all(np.isfinite(flat)):
        raise InvalidArgument("non-finite angle in block")
    m = u3_stack(flat).reshape(-1, 2, 2, 2)
    layers = (m[:, 0, :, None, :, None] * m[:, 1, None, :, None, :]).reshape(-1, 4, 4)
    # explicit broadcast-and-sum rather than @: BLAS and numpy's fallback loop
    # round differently and the choice depends on memory alignment, which
    # would make fits irreproducible
    out = layers[0]
    for lay in layers[1:]:
        out = (lay[:, :, None] * (_CZ_DIAG[:, None] * out)[None, :, :]).sum(axis=1)
    if phase:
        out = out * cmath.exp(1j * phase)
    return out


def block_matrix(block) -> np.ndarray:
    """4x4 unitary of a Block (anything with ``layout``, ``angles``, ``phase``)."""
    return layout_matrix(block.layout, block.angles, block.phase)


def deviation(m1: np.ndarray, m2: np.ndarray) -> float:
    """Scaled Frobenius distance sqrt(sum |m1 - m2|^2 / size); 0.5 for (I4, CZ)."""
    m1, m2 = np.asarray(m1), np.asarray(m2)
    if m1.shape != m2.shape or m1.ndim != 2:
        raise InvalidArgument(f"shape mismatch {m1.shape} vs {m2.shape}")
    d = m1 - m2
    return math.sqrt(float(np.sum(d.real**2 + d.imag**2)) / d.size)


def best_phase(m: np.ndarray, target: np.ndarray) -> float:
    """Phase a minimising ||exp(i a) m - target||_F."""
    ip = complex(np.sum(np.conj(m) * target))
    return cmath.phase(ip) if abs(ip) > 0 else 0.0


def distance_up_to_phase(u1: np.ndarray, u2: np.ndarray) -> float:
    u1, u2 = np.asarray(u1), np.asarray(u2)
    if u1.shape != u2.shape:
        raise InvalidArgument(f"shape mismatch {u1.shape} vs {u2.shape}")
    a = best_phase(u2, u1)
    return float(np.linalg.norm(u1 - cmath.exp(1j * a) * u2))


def unitarity_error(u: np.ndarray) -> float:
    u = np.asarray(u)
    return float(np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0])))


def zyz_decompose(u: np.ndarray, tol: float = 1e-10) -> tuple[U3Params, float]:
    """Return (params, alpha) with exp(i alpha) * u3(params) == u, theta in [0, pi].

    When theta is 0 or pi only one combination of phi and lam is fixed; phi is
    then set to 0 and lam carries the rest.
    """
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2):
        raise InvalidArgument(f"expected 2x2 matrix, got {u.shape}")
    if unitarity_error(u) > tol:
        raise InvalidArgument("matrix is not unitary")
    c, s = abs(u[0, 0]), abs(u[1, 0])
    theta = 2.0 * math.atan2(s, c)
    eps = 1e-12
    if s < eps:
        alpha = cmath.phase(u[0, 0])
        phi, lam = 0.0, cmath.phase(u[1, 1]) - alpha
    elif c < eps:
        alpha = cmath.phase(u[1, 0])
        phi, lam = 0.0, cmath.phase(-u[0, 1]) - alpha
    else:
        alpha = cmath.phase(u[0, 0])
        phi = cmath.phase(u[1, 0]) - alpha
        lam = cmath.phase(-u[0, 1]) - alpha
    return (
        U3Params(theta, normalize_angle(phi), normalize_angle(lam)),
        normalize_angle(alpha),
    )


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Gaussian matrix."""
    g = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / math.sqrt(2)
    q, r = np.linalg.qr(g)
    d = np.diag(r)
    return q * (d / np.abs(d))
