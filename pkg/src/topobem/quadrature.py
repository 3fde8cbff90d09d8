"""Shape functions and integration rules for straight quadratic elements.

All element integrals run in the parametric coordinate zeta in [0, 1].
Singular self-element integrals use closed forms of the Cauchy principal
value and logarithmic moments of the shape functions; regular integrals
use Gauss-Legendre with distance-graded subdivision near the source point.
"""
from __future__ import annotations

from functools import lru_cache
from math import comb, log

import numpy as np

from .model import COLLOCATION_PARAMS

__all__ = [
    "shape_functions",
    "shape_coefficients",
    "gauss_rule",
    "subdivided_rule",
    "subdivision_depth",
    "cpv_shape_integrals",
    "log_shape_integrals",
    "SHAPE_MOMENTS",
    "SHAPE_MASS",
    "CPV_TABLE",
    "LOG_TABLE",
    "GAUSS_ORDER",
    "NEAR_DISTANCE_FACTOR",
]

# Gauss points per (sub)interval and the distance/length ratio below which
# an element is integrated with graded subdivision.
GAUSS_ORDER = 8
NEAR_DISTANCE_FACTOR = 2.0
MAX_SUBDIVISION_DEPTH = 8


def shape_coefficients() -> np.ndarray:
    """Monomial coefficients of the three Lagrange shape functions.

    Row b holds (c0, c1, c2) with phi_b(z) = c0 + c1 z + c2 z^2, interpolating
    the collocation nodes {0.25, 0.5, 0.75}.
    """
    return np.array(
        [
            [3.0, -10.0, 8.0],
            [-3.0, 16.0, -16.0],
            [1.0, -6.0, 8.0],
        ]
    )


_COEFFS = shape_coefficients()


def shape_functions(zeta: np.ndarray) -> np.ndarray:
    """Evaluate the three shape functions, output shape zeta.shape + (3,)."""
    z = np.asarray(zeta, dtype=float)
    return np.stack(
        [_COEFFS[b, 0] + _COEFFS[b, 1] * z + _COEFFS[b, 2] * z * z for b in range(3)],
        axis=-1,
    )


@lru_cache(maxsize=None)
def gauss_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def subdivided_rule(order: int, depth: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss rule applied on 2**depth equal subintervals of [0, 1]."""
    x, w = gauss_rule(order)
    n = 2**depth
    starts = np.arange(n) / n
    xs = (starts[:, None] + x[None, :] / n).ravel()
    ws = np.tile(w / n, n)
    return xs, ws


def subdivision_depth(dist_ratio: np.ndarray) -> np.ndarray:
    """Subdivision depth for a source at ``dist_ratio`` element lengths away.

    Guarantees every subinterval sees the source at >= NEAR_DISTANCE_FACTOR
    of its own length, preserving single-rule Gauss accuracy.
    """
    ratio = np.maximum(np.asarray(dist_ratio, dtype=float), 1e-300)
    depth = np.ceil(np.log2(NEAR_DISTANCE_FACTOR / ratio))
    return np.clip(depth, 0, MAX_SUBDIVISION_DEPTH).astype(int)


def _cpv_monomial(k: int, a: float) -> float:
    """CPV integral of z**k / (z - a) over [0, 1], 0 < a < 1."""
    out = a**k * log((1.0 - a) / a)
    for j in range(1, k + 1):
        out += comb(k, j) * a ** (k - j) * ((1.0 - a) ** j - (-a) ** j) / j
    return out


def _log_monomial(k: int, a: float) -> float:
    """Integral of z**k * ln|z - a| over [0, 1], 0 < a < 1."""

    def antideriv(j: int, w: float) -> float:
        if w == 0.0:
            return 0.0
        return w ** (j + 1) / (j + 1) * (log(abs(w)) - 1.0 / (j + 1))

    out = 0.0
    for j in range(0, k + 1):
        out += comb(k, j) * a ** (k - j) * (antideriv(j, 1.0 - a) - antideriv(j, -a))
    return out


def cpv_shape_integrals(a: float) -> np.ndarray:
    """CPV integrals of phi_b(z) / (z - a) over [0, 1] for b = 0..2."""
    return np.array(
        [sum(_COEFFS[b, k] * _cpv_monomial(k, a) for k in range(3)) for b in range(3)]
    )


def log_shape_integrals(a: float) -> np.ndarray:
    """Integrals of phi_b(z) * ln|z - a| over [0, 1] for b = 0..2."""
    return np.array(
        [sum(_COEFFS[b, k] * _log_monomial(k, a) for k in range(3)) for b in range(3)]
    )


# First moments of the shape functions (integrate to [2/3, -1/3, 2/3]).
SHAPE_MOMENTS = np.array(
    [_COEFFS[b, 0] + _COEFFS[b, 1] / 2.0 + _COEFFS[b, 2] / 3.0 for b in range(3)]
)

# Tables indexed [node a, shape b] for the three collocation nodes.
CPV_TABLE = np.array([cpv_shape_integrals(a) for a in COLLOCATION_PARAMS])
LOG_TABLE = np.array([log_shape_integrals(a) for a in COLLOCATION_PARAMS])


def _shape_mass() -> np.ndarray:
    x, w = gauss_rule(3)  # exact for degree-4 integrands
    phi = shape_functions(x)  # (3 pts, 3 shapes)
    return np.einsum("q,qa,qb->ab", w, phi, phi)


# Mass matrix of the shape functions, used by boundary-work quadrature.
SHAPE_MASS = _shape_mass()
