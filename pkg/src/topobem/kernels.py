"""Plane-strain Kelvin fundamental solutions and their stress kernels.

Conventions (verified against uniform-stress and point-force fields):

* ``dx = field - source``, ``r = |dx|``, ``rd = dx / r``.
* ``U[i, j]``: displacement component j at the field point due to a unit
  point force along i at the source.
* ``T[i, j]``: traction component j at the field point (outward normal n)
  for the same unit force.
* ``D[i, j, k]`` and ``S[i, j, k]``: stress sigma_ij at the source point of
  the representation integral, multiplying t_k and u_k at the field point:
  ``sigma_ij = sum_k (D_ijk t_k - S_ijk u_k)`` integrated over the boundary.
"""
from __future__ import annotations

import numpy as np

from .model import Material

__all__ = [
    "kelvin_kernels",
    "kelvin_displacement",
    "kelvin_traction",
    "stress_kernels",
]

_EYE = np.eye(2)


def _geometry(dx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    r = np.linalg.norm(dx, axis=-1)
    if np.any(r == 0.0):
        raise ValueError("coincident source and field points")
    return r, dx / r[..., None]


def kelvin_displacement(dx: np.ndarray, mat: Material) -> np.ndarray:
    """Displacement kernel U, shape dx.shape[:-1] + (2, 2)."""
    nu = mat.poisson_ratio
    mu = mat.shear_modulus
    r, rd = _geometry(dx)
    c = 1.0 / (8.0 * np.pi * mu * (1.0 - nu))
    return c * (
        -(3.0 - 4.0 * nu) * np.log(r)[..., None, None] * _EYE
        + rd[..., :, None] * rd[..., None, :]
    )


def kelvin_traction(dx: np.ndarray, normal: np.ndarray, mat: Material) -> np.ndarray:
    """Traction kernel T for field-point outward normal ``normal``."""
    nu = mat.poisson_ratio
    r, rd = _geometry(dx)
    n = np.broadcast_to(normal, dx.shape)
    drdn = np.einsum("...i,...i->...", rd, n)
    c = -1.0 / (4.0 * np.pi * (1.0 - nu))
    sym = (1.0 - 2.0 * nu) * _EYE + 2.0 * rd[..., :, None] * rd[..., None, :]
    skew = rd[..., None, :] * n[..., :, None] - rd[..., :, None] * n[..., None, :]
    return (c / r)[..., None, None] * (
        drdn[..., None, None] * sym + (1.0 - 2.0 * nu) * skew
    )


def kelvin_kernels(
    source: np.ndarray, field: np.ndarray, normal: np.ndarray, mat: Material
) -> tuple[np.ndarray, np.ndarray]:
    """U and T kernels for a single source/field pair (or broadcastable arrays)."""
    dx = np.asarray(field, dtype=float) - np.asarray(source, dtype=float)
    return kelvin_displacement(dx, mat), kelvin_traction(dx, normal, mat)


def stress_kernels(
    dx: np.ndarray, normal: np.ndarray, mat: Material
) -> tuple[np.ndarray, np.ndarray]:
    """Stress kernels (D, S), each of shape dx.shape[:-1] + (2, 2, 2).

    ``D_ijk = 1/(4 pi (1-nu) r) [(1-2nu)(d_ik rd_j + d_jk rd_i - d_ij rd_k)
                                 + 2 rd_i rd_j rd_k]``

    ``S_ijk = mu/(2 pi (1-nu) r^2) { 2 drdn [(1-2nu) d_ij rd_k
              + nu (d_ik rd_j + d_jk rd_i) - 4 rd_i rd_j rd_k]
              + 2 nu (n_i rd_j + n_j rd_i) rd_k
              + (1-2nu)(2 n_k rd_i rd_j + n_j d_ik + n_i d_jk)
              - (1-4nu) n_k d_ij }``

    Expanded component-wise (both are symmetric in i, j) to keep the
    temporaries scalar-shaped on large batches.
    """
    nu = mat.poisson_ratio
    mu = mat.shear_modulus
    r, rd = _geometry(dx)
    n = np.broadcast_to(normal, dx.shape)
    r0, r1 = rd[..., 0], rd[..., 1]
    n0, n1 = n[..., 0], n[..., 1]
    drdn = r0 * n0 + r1 * n1
    a = 1.0 - 2.0 * nu
    b = 1.0 - 4.0 * nu

    r00, r01, r11 = r0 * r0, r0 * r1, r1 * r1

    cd = 1.0 / (4.0 * np.pi * (1.0 - nu)) / r
    D = np.empty(dx.shape[:-1] + (2, 2, 2))
    D[..., 0, 0, 0] = cd * (a * r0 + 2.0 * r00 * r0)
    D[..., 0, 0, 1] = cd * (-a * r1 + 2.0 * r00 * r1)
    D[..., 0, 1, 0] = cd * (a * r1 + 2.0 * r00 * r1)
    D[..., 0, 1, 1] = cd * (a * r0 + 2.0 * r11 * r0)
    D[..., 1, 1, 0] = cd * (-a * r0 + 2.0 * r11 * r0)
    D[..., 1, 1, 1] = cd * (a * r1 + 2.0 * r11 * r1)
    D[..., 1, 0, :] = D[..., 0, 1, :]

    cs = 0.5 * mu / (np.pi * (1.0 - nu)) / (r * r)
    two_drdn = 2.0 * drdn
    S = np.empty(dx.shape[:-1] + (2, 2, 2))
    S[..., 0, 0, 0] = cs * (
        two_drdn * ((a + 2.0 * nu) * r0 - 4.0 * r00 * r0)
        + 4.0 * nu * n0 * r00
        + a * (2.0 * n0 * r00 + 2.0 * n0)
        - b * n0
    )
    S[..., 0, 0, 1] = cs * (
        two_drdn * (a * r1 - 4.0 * r00 * r1)
        + 4.0 * nu * n0 * r01
        + 2.0 * a * n1 * r00
        - b * n1
    )
    S[..., 0, 1, 0] = cs * (
        two_drdn * (nu * r1 - 4.0 * r00 * r1)
        + 2.0 * nu * (n0 * r01 + n1 * r00)
        + a * (2.0 * n0 * r01 + n1)
    )
    S[..., 0, 1, 1] = cs * (
        two_drdn * (nu * r0 - 4.0 * r11 * r0)
        + 2.0 * nu * (n0 * r11 + n1 * r01)
        + a * (2.0 * n1 * r01 + n0)
    )
    S[..., 1, 1, 0] = cs * (
        two_drdn * (a * r0 - 4.0 * r11 * r0)
        + 4.0 * nu * n1 * r01
        + 2.0 * a * n0 * r11
        - b * n0
    )
    S[..., 1, 1, 1] = cs * (
        two_drdn * ((a + 2.0 * nu) * r1 - 4.0 * r11 * r1)
        + 4.0 * nu * n1 * r11
        + a * (2.0 * n1 * r11 + 2.0 * n1)
        - b * n1
    )
    S[..., 1, 0, :] = S[..., 0, 1, :]
    return D, S
