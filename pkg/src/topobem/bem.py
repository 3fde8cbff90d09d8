"""Direct collocation BEM for 2D plane-strain elastostatics.

Unknowns are per collocation point: displacement on Neumann elements,
traction on Dirichlet elements (6 DOF per element).  Influence integrals
are pairwise local: an entry depends only on the source point and the
integrated element, never on the rest of the boundary; the incremental
inverse update relies on that.  Self-element singular integrals use closed
forms; neighbouring (near-singular) pairs use distance-graded subdivision.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .kernels import kelvin_displacement, kelvin_traction, stress_kernels
from .model import (
    COLLOCATION_PARAMS,
    BoundaryModel,
    FaceKey,
    Material,
)
from .quadrature import (
    CPV_TABLE,
    GAUSS_ORDER,
    LOG_TABLE,
    NEAR_DISTANCE_FACTOR,
    SHAPE_MASS,
    SHAPE_MOMENTS,
    gauss_rule,
    shape_functions,
    subdivided_rule,
    subdivision_depth,
)

__all__ = [
    "BemError",
    "SingularSystemError",
    "DistanceViolationError",
    "BemSystem",
    "BoundarySolution",
    "InteriorState",
    "assemble",
    "system_blocks",
    "rhs_vector",
    "solve",
    "interior_state",
    "interior_fields",
    "strain_energy",
    "strain_from_stress",
    "segment_distances",
]

# Target number of (point, element, gauss) triples per vectorized batch.
_BATCH_BUDGET = 1_000_000

# Interior field evaluation uses a lighter rule than assembly; graded
# subdivision near the boundary keeps the worst-pair error ~1e-7.
INTERIOR_GAUSS_ORDER = 4

# Interior evaluation stand-off in units of the finest element length.
DEFAULT_STANDOFF = 0.4

# Reciprocal-condition floor below which the direct solve refuses to proceed.
_RCOND_LIMIT = 1e-13


class BemError(Exception):
    """Base error of the boundary-element layer."""


class SingularSystemError(BemError):
    def __init__(self, message: str, smallest_singular_value: float | None = None):
        super().__init__(message)
        self.smallest_singular_value = smallest_singular_value


class DistanceViolationError(BemError):
    """Interior evaluation requested too close to the boundary."""

    def __init__(self, message: str, point_indices: np.ndarray):
        super().__init__(message)
        self.point_indices = point_indices


@dataclass
class BemSystem:
    """Dense collocation system A x = rhs with 6 DOF per element."""

    matrix: np.ndarray
    rhs: np.ndarray
    dof_map: dict[FaceKey, int]  # element id -> first of its 6 dofs
    n: int
    model: BoundaryModel
    material: Material


@dataclass
class BoundarySolution:
    """Displacements and tractions at all collocation points.

    Prescribed values are echoed exactly; the other field is solved.
    Arrays are indexed (element, node, component) following ``element_order``.
    """

    u: np.ndarray  # (E, 3, 2)
    t: np.ndarray  # (E, 3, 2)
    element_order: tuple[FaceKey, ...]

    def scaled(self, factor: float) -> "BoundarySolution":
        return BoundarySolution(self.u * factor, self.t * factor, self.element_order)


@dataclass
class InteriorState:
    """Displacement, stress and strain at one interior point."""

    u: np.ndarray  # (2,)
    sigma: np.ndarray  # (2, 2)
    epsilon: np.ndarray  # (2, 2)


def segment_distances(points: np.ndarray, model: BoundaryModel,
                      positions: np.ndarray | None = None) -> np.ndarray:
    """Distances from each point to each element segment, shape (P, E)."""
    if positions is None:
        positions = np.arange(model.n_s)
    p0 = model.endpoints[positions, 0]  # (E, 2)
    tang = model.tangents[positions]
    lengths = model.lengths[positions]
    v = points[:, None, :] - p0[None, :, :]  # (P, E, 2)
    proj = np.einsum("pei,ei->pe", v, tang)
    proj = np.clip(proj, 0.0, lengths[None, :])
    closest = p0[None] + proj[..., None] * tang[None]
    return np.linalg.norm(points[:, None, :] - closest, axis=-1)


def _batched(n_points: int, n_elems: int, n_q: int) -> int:
    per_point = max(1, n_elems * n_q)
    return max(1, min(n_points, _BATCH_BUDGET // per_point))


def _self_blocks(model: BoundaryModel, mat: Material, pairs_p: np.ndarray,
                 pairs_e: np.ndarray, src_node: np.ndarray,
                 jump: bool) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form singular blocks for collocation points on their own element.

    Returns (H, G) of shape (n_pairs, 2, 3, 2).  On a straight element the
    traction kernel reduces to its skew part with a 1/r singularity whose
    principal value has a closed form; the displacement kernel needs the
    logarithmic shape moments.
    """
    nu = mat.poisson_ratio
    mu = mat.shear_modulus
    n_pairs = len(pairs_p)
    H = np.zeros((n_pairs, 2, 3, 2))
    G = np.zeros((n_pairs, 2, 3, 2))
    if n_pairs == 0:
        return H, G

    elems = pairs_e
    s = model.tangents[elems]  # (n, 2)
    n_vec = model.normals[elems]
    L = model.lengths[elems]
    a = src_node[pairs_p]  # node index of the collocation point

    kappa = (1.0 - 2.0 * nu) / (4.0 * np.pi * (1.0 - nu))
    skew = s[:, None, :] * n_vec[:, :, None] - s[:, :, None] * n_vec[:, None, :]
    # skew[i, j] = s_j n_i - s_i n_j
    H -= kappa * CPV_TABLE[a][:, None, :, None] * skew[:, :, None, :]

    c1 = 1.0 / (8.0 * np.pi * mu * (1.0 - nu))
    log_mom = -np.log(L)[:, None] * SHAPE_MOMENTS[None, :] - LOG_TABLE[a]  # (n, 3)
    iso = (3.0 - 4.0 * nu) * log_mom[:, None, :, None] * np.eye(2)[None, :, None, :]
    ss = (s[:, :, None] * s[:, None, :])[:, :, None, :] * SHAPE_MOMENTS[None, None, :, None]
    G += c1 * L[:, None, None, None] * (iso + ss)

    if jump:
        H[np.arange(n_pairs), 0, a, 0] += 0.5
        H[np.arange(n_pairs), 1, a, 1] += 0.5
    return H, G


def influence_blocks(
    model: BoundaryModel,
    mat: Material,
    src_points: np.ndarray,
    src_elem: np.ndarray,
    src_node: np.ndarray,
    col_positions: np.ndarray | None = None,
    *,
    jump: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Element influence blocks of the boundary integral operators.

    Parameters
    ----------
    src_points : (P, 2) evaluation points.
    src_elem : (P,) position of the element owning each point in the model,
        or -1 for interior points.
    src_node : (P,) collocation node index within the owning element (0..2),
        or -1 for interior points.
    col_positions : element positions to integrate over (default: all).

    Returns
    -------
    (H, G) of shape (P, E, 2, 3, 2): ``[point, element, i, node, j]`` with
    H the traction-kernel blocks (including the 1/2 jump on self pairs when
    ``jump`` is set) and G the displacement-kernel blocks.
    """
    if col_positions is None:
        col_positions = np.arange(model.n_s)
    col_positions = np.asarray(col_positions, dtype=int)
    src_points = np.atleast_2d(np.asarray(src_points, dtype=float))
    P, E = len(src_points), len(col_positions)

    p0 = model.endpoints[col_positions, 0]
    dvec = model.endpoints[col_positions, 1] - p0  # p1 - p0, length L * tangent
    normals = model.normals[col_positions]
    lengths = model.lengths[col_positions]

    dist = segment_distances(src_points, model, col_positions)
    self_mask = src_elem[:, None] == col_positions[None, :]
    ratio = dist / lengths[None, :]
    near_mask = (ratio < NEAR_DISTANCE_FACTOR) & ~self_mask

    H = np.empty((P, E, 2, 3, 2))
    G = np.empty((P, E, 2, 3, 2))

    # Baseline single-interval Gauss for every pair; near/self overwritten.
    zq, wq = gauss_rule(GAUSS_ORDER)
    phi = shape_functions(zq)  # (Q, 3)
    chunk = _batched(P, E, GAUSS_ORDER)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for lo in range(0, P, chunk):
            hi = min(P, lo + chunk)
            xq = p0[None, :, None, :] + zq[None, None, :, None] * dvec[None, :, None, :]
            dx = xq - src_points[lo:hi, None, None, :]
            r = np.linalg.norm(dx, axis=-1)
            bad = r < 1e-300
            if np.any(bad):  # garbage on self pairs, replaced below
                dx = dx.copy()
                dx[bad] = 1.0
            T = kelvin_traction(dx, normals[None, :, None, :], mat)
            H[lo:hi] = np.einsum("q,peqij,qb->peibj", wq, T, phi, optimize=True)
            U = kelvin_displacement(dx, mat)
            G[lo:hi] = np.einsum("q,peqij,qb->peibj", wq, U, phi, optimize=True)
    H *= lengths[None, :, None, None, None]
    G *= lengths[None, :, None, None, None]

    # Graded subdivision for near pairs.
    if np.any(near_mask):
        pp, ee = np.nonzero(near_mask)
        depths = subdivision_depth(ratio[pp, ee])
        for d in np.unique(depths):
            sel = depths == d
            ps, es = pp[sel], ee[sel]
            zs, ws = subdivided_rule(GAUSS_ORDER, int(d))
            phis = shape_functions(zs)
            xq = p0[es][:, None, :] + zs[None, :, None] * dvec[es][:, None, :]
            dx = xq - src_points[ps][:, None, :]
            T = kelvin_traction(dx, normals[es][:, None, :], mat)
            U = kelvin_displacement(dx, mat)
            H[ps, es] = np.einsum("q,nqij,qb->nibj", ws, T, phis) * lengths[es][:, None, None, None]
            G[ps, es] = np.einsum("q,nqij,qb->nibj", ws, U, phis) * lengths[es][:, None, None, None]

    # Closed forms on self pairs.
    if np.any(self_mask):
        pp, ee = np.nonzero(self_mask)
        Hs, Gs = _self_blocks(model, mat, pp, col_positions[ee], src_node, jump)
        H[pp, ee] = Hs
        G[pp, ee] = Gs

    return H, G


def stress_influence_blocks(
    model: BoundaryModel,
    mat: Material,
    points: np.ndarray,
    col_positions: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Stress-identity blocks (D, S) of shape (P, E, 2, 2, 3, 2).

    ``[point, element, i, j, node, k]``; valid for interior points only.
    """
    if col_positions is None:
        col_positions = np.arange(model.n_s)
    col_positions = np.asarray(col_positions, dtype=int)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    P, E = len(points), len(col_positions)

    p0 = model.endpoints[col_positions, 0]
    dvec = model.endpoints[col_positions, 1] - p0
    normals = model.normals[col_positions]
    lengths = model.lengths[col_positions]

    dist = segment_distances(points, model, col_positions)
    ratio = dist / lengths[None, :]
    near_mask = ratio < NEAR_DISTANCE_FACTOR

    DD = np.empty((P, E, 2, 2, 3, 2))
    SS = np.empty((P, E, 2, 2, 3, 2))

    order = INTERIOR_GAUSS_ORDER
    zq, wq = gauss_rule(order)
    phi = shape_functions(zq)
    chunk = _batched(P, E, order)
    for lo in range(0, P, chunk):
        hi = min(P, lo + chunk)
        xq = p0[None, :, None, :] + zq[None, None, :, None] * dvec[None, :, None, :]
        dx = xq - points[lo:hi, None, None, :]
        D, S = stress_kernels(dx, normals[None, :, None, :], mat)
        DD[lo:hi] = np.einsum("q,peqijk,qb->peijbk", wq, D, phi, optimize=True)
        SS[lo:hi] = np.einsum("q,peqijk,qb->peijbk", wq, S, phi, optimize=True)
    DD *= lengths[None, :, None, None, None, None]
    SS *= lengths[None, :, None, None, None, None]

    if np.any(near_mask):
        pp, ee = np.nonzero(near_mask)
        depths = subdivision_depth(ratio[pp, ee])
        for d in np.unique(depths):
            sel = depths == d
            ps, es = pp[sel], ee[sel]
            zs, ws = subdivided_rule(order, int(d))
            phis = shape_functions(zs)
            xq = p0[es][:, None, :] + zs[None, :, None] * dvec[es][:, None, :]
            dx = xq - points[ps][:, None, :]
            D, S = stress_kernels(dx, normals[es][:, None, :], mat)
            DD[ps, es] = np.einsum("q,nqijk,qb->nijbk", ws, D, phis) * lengths[es][:, None, None, None, None]
            SS[ps, es] = np.einsum("q,nqijk,qb->nijbk", ws, S, phis) * lengths[es][:, None, None, None, None]

    return DD, SS


def _collocation_rows(model: BoundaryModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pts = model.collocation.reshape(-1, 2)
    elem = np.repeat(np.arange(model.n_s), 3)
    node = np.tile(np.arange(3), model.n_s)
    return pts, elem, node


def _to_matrix(blocks: np.ndarray) -> np.ndarray:
    """(P, E, 2, 3, 2) influence blocks -> (2P, 6E) dense matrix."""
    P, E = blocks.shape[:2]
    return blocks.transpose(0, 2, 1, 3, 4).reshape(2 * P, 6 * E)


def _prescribed_split(model: BoundaryModel) -> tuple[np.ndarray, np.ndarray]:
    """Zero-filled prescribed (u, t) vectors of length 6E."""
    dir_mask = model.is_dirichlet[:, None, None]
    ubar = np.where(dir_mask, model.prescribed, 0.0).ravel()
    tbar = np.where(~dir_mask, model.prescribed, 0.0).ravel()
    return ubar, tbar


def assemble(model: BoundaryModel, mat: Material) -> BemSystem:
    """Assemble the dense collocation system for the given boundary."""
    if not model.loops_closed():
        raise BemError("boundary model loops are not closed")
    pts, elem, node = _collocation_rows(model)
    H, G = influence_blocks(model, mat, pts, elem, node)
    Hm, Gm = _to_matrix(H), _to_matrix(G)

    n = 6 * model.n_s
    A = np.empty((n, n))
    col_dir = np.repeat(model.is_dirichlet, 6)
    A[:, ~col_dir] = Hm[:, ~col_dir]
    A[:, col_dir] = -Gm[:, col_dir]

    ubar, tbar = _prescribed_split(model)
    rhs = Gm @ tbar - Hm @ ubar

    dof_map = {key: 6 * pos for key, pos in model.element_index.items()}
    return BemSystem(matrix=A, rhs=rhs, dof_map=dof_map, n=n, model=model, material=mat)


def system_blocks(
    model: BoundaryModel,
    mat: Material,
    row_keys: tuple[FaceKey, ...],
    col_keys: tuple[FaceKey, ...],
) -> np.ndarray:
    """System sub-matrix coupling the rows of ``row_keys`` to the unknowns
    of ``col_keys``; entries identical to the corresponding slice of a full
    assembly."""
    row_pos = model.subset_positions(row_keys)
    col_pos = model.subset_positions(col_keys)
    pts = model.collocation[row_pos].reshape(-1, 2)
    elem = np.repeat(row_pos, 3)
    node = np.tile(np.arange(3), len(row_pos))
    H, G = influence_blocks(model, mat, pts, elem, node, col_pos)
    Hm, Gm = _to_matrix(H), _to_matrix(G)
    col_dir = np.repeat(model.is_dirichlet[col_pos], 6)
    out = np.empty_like(Hm)
    out[:, ~col_dir] = Hm[:, ~col_dir]
    out[:, col_dir] = -Gm[:, col_dir]
    return out


def rhs_vector(
    model: BoundaryModel, mat: Material, row_keys: tuple[FaceKey, ...] | None = None
) -> np.ndarray:
    """Right-hand side from prescribed data, recomputing only the columns of
    elements carrying nonzero prescriptions."""
    if row_keys is None:
        row_keys = model.keys()
    row_pos = model.subset_positions(row_keys)
    nonzero = np.flatnonzero(np.any(model.prescribed != 0.0, axis=(1, 2)))
    rhs = np.zeros(6 * len(row_pos))
    if len(nonzero) == 0:
        return rhs
    pts = model.collocation[row_pos].reshape(-1, 2)
    elem = np.repeat(row_pos, 3)
    node = np.tile(np.arange(3), len(row_pos))
    H, G = influence_blocks(model, mat, pts, elem, node, nonzero)
    Hm, Gm = _to_matrix(H), _to_matrix(G)
    dir_mask = model.is_dirichlet[nonzero][:, None, None]
    pres = model.prescribed[nonzero]
    ubar = np.where(dir_mask, pres, 0.0).ravel()
    tbar = np.where(~dir_mask, pres, 0.0).ravel()
    return Gm @ tbar - Hm @ ubar


def _solution_from_vector(system: BemSystem, x: np.ndarray) -> BoundarySolution:
    model = system.model
    starts = np.array([system.dof_map[key] for key in model.keys()])
    xb = x[(starts[:, None] + np.arange(6)[None, :]).ravel()].reshape(model.n_s, 3, 2)
    dir_mask = model.is_dirichlet[:, None, None]
    u = np.where(dir_mask, model.prescribed, xb)
    t = np.where(dir_mask, xb, model.prescribed)
    return BoundarySolution(u=u, t=t, element_order=model.keys())


def solve(
    system: BemSystem,
    inverse=None,
    *,
    refine: bool = True,
    regularize: bool = False,
) -> BoundarySolution:
    """Solve the collocation system.

    With ``inverse`` supplied (an InverseState of matching size) the solution
    is the explicit inverse applied to the right-hand side, with one residual
    correction pass; otherwise a full LU factorization is used.  Pass
    ``regularize`` for consistent singular systems (pure Neumann problems),
    solved in the least-squares sense.
    """
    if inverse is not None:
        if inverse.inverse.shape != (system.n, system.n):
            raise BemError(
                f"inverse size {inverse.inverse.shape} does not match N={system.n}"
            )
        x = inverse.inverse @ system.rhs
        if refine:
            resid = system.rhs - system.matrix @ x
            x = x + inverse.inverse @ resid
        return _solution_from_vector(system, x)

    if regularize:
        x, *_ = np.linalg.lstsq(system.matrix, system.rhs, rcond=None)
        return _solution_from_vector(system, x)

    anorm = np.linalg.norm(system.matrix, 1)
    try:
        lu, piv = scipy.linalg.lu_factor(system.matrix)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystemError(f"LU factorization failed: {exc}") from exc
    rcond = scipy.linalg.lapack.dgecon(lu, anorm, norm="1")[0]
    if not np.isfinite(rcond) or rcond < _RCOND_LIMIT:
        smin = float(np.linalg.svd(system.matrix, compute_uv=False)[-1])
        raise SingularSystemError(
            f"system matrix is singular to working precision "
            f"(reciprocal condition {rcond:.3e}, smallest singular value "
            f"{smin:.3e}); a free-floating boundary piece usually causes this",
            smallest_singular_value=smin,
        )
    x = scipy.linalg.lu_solve((lu, piv), system.rhs)
    return _solution_from_vector(system, x)


def strain_from_stress(sigma: np.ndarray, mat: Material) -> np.ndarray:
    """Plane-strain Hooke inverse, applied over the last two axes."""
    mu = mat.shear_modulus
    lam = mat.lame_lambda
    tr = np.trace(sigma, axis1=-2, axis2=-1)
    return (sigma - (lam / (2.0 * (lam + mu))) * tr[..., None, None] * np.eye(2)) / (
        2.0 * mu
    )


def interior_fields(
    points: np.ndarray,
    sol: BoundarySolution,
    model: BoundaryModel,
    mat: Material,
    *,
    standoff: float = DEFAULT_STANDOFF,
    need_displacement: bool = True,
) -> tuple[np.ndarray | None, np.ndarray, np.ndarray]:
    """Displacement, stress and strain at interior points (batched).

    Returns (u, sigma, epsilon) with shapes (P, 2), (P, 2, 2), (P, 2, 2);
    ``u`` is None when ``need_displacement`` is off (derivative sampling
    only needs the stress state).  Raises DistanceViolationError when a
    point sits closer to the boundary than ``standoff`` times the finest
    element length.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if sol.element_order != model.keys():
        raise BemError("solution does not belong to this boundary model")
    dist = segment_distances(points, model).min(axis=1)
    limit = standoff * model.min_length
    bad = np.flatnonzero(dist < limit)
    if len(bad):
        raise DistanceViolationError(
            f"{len(bad)} evaluation points closer than {limit:.3g} to the boundary",
            point_indices=bad,
        )

    u = None
    if need_displacement:
        elem = np.full(len(points), -1, dtype=int)
        node = np.full(len(points), -1, dtype=int)
        H, G = influence_blocks(model, mat, points, elem, node, jump=False)
        u = np.einsum("peibj,ebj->pi", G, sol.t) - np.einsum("peibj,ebj->pi", H, sol.u)

    DD, SS = stress_influence_blocks(model, mat, points)
    sigma = np.einsum("peijbk,ebk->pij", DD, sol.t) - np.einsum(
        "peijbk,ebk->pij", SS, sol.u
    )
    sigma = 0.5 * (sigma + sigma.swapaxes(-2, -1))  # symmetry to roundoff
    eps = strain_from_stress(sigma, mat)
    return u, sigma, eps


def interior_state(
    point: np.ndarray,
    sol: BoundarySolution,
    model: BoundaryModel,
    mat: Material,
    *,
    standoff: float = DEFAULT_STANDOFF,
) -> InteriorState:
    """Displacement, stress and strain at a single interior point."""
    u, sigma, eps = interior_fields(
        np.asarray(point, dtype=float)[None, :], sol, model, mat, standoff=standoff
    )
    return InteriorState(u=u[0], sigma=sigma[0], epsilon=eps[0])


def strain_energy(sol: BoundarySolution, model: BoundaryModel) -> float:
    """Strain energy as boundary work: E = 1/2 * integral of t . u ds."""
    if sol.element_order != model.keys():
        raise BemError("solution does not belong to this boundary model")
    per_elem = np.einsum("ab,eai,ebi->e", SHAPE_MASS, sol.t, sol.u)
    return float(0.5 * np.sum(model.lengths * per_elem))
