"""Blockwise maintenance of the explicit system-matrix inverse.

Adding K rows/columns extends the inverse through the Schur complement
S = D - C A^-1 B; removing them shrinks it through A^-1 = E - F H^-1 G,
where E, F, G, H partition the current inverse with the dropped degrees of
freedom trailing.  Nothing here multiplies two full-size square matrices;
the dominant cost is M^2 K per update.  A drift audit with full refresh
guards against error accumulation, and a truncated-SVD pseudo-inverse
covers singular Schur blocks.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .bem import BemSystem, system_blocks
from .model import BoundaryModel, FaceKey, Material
from .remesh import BoundaryDiff

__all__ = [
    "InverseUpdateError",
    "SingularSchurError",
    "SingularShrinkError",
    "InverseState",
    "extend_inverse",
    "shrink_inverse",
    "regularized_inverse",
    "apply_diff",
    "audit_drift",
]

# Condition-number estimate above which a Schur block is treated as singular.
_COND_LIMIT = 1e12

DEFAULT_REFRESH_THRESHOLD = 1e-6
DEFAULT_SVD_REL_TOL = 1e-10


class InverseUpdateError(Exception):
    pass


class SingularSchurError(InverseUpdateError):
    """Schur complement of the added block is numerically singular.

    Typically caused by a newly closed cavity whose boundary couples weakly
    to the rest of the system; enable regularization or refresh fully.
    """


class SingularShrinkError(InverseUpdateError):
    """The dropped diagonal block of the inverse is numerically singular."""


def _mm(a: np.ndarray, b: np.ndarray, counter: list | None) -> np.ndarray:
    """Matrix product with optional (m, k, n) operation recording."""
    if counter is not None:
        counter.append((a.shape[0], a.shape[1], b.shape[1]))
    return a @ b


def _mm_accumulate(
    c: np.ndarray, a: np.ndarray, b: np.ndarray, alpha: float, counter: list | None
) -> np.ndarray:
    """In-place c += alpha * (a @ b) without a full-size temporary.

    All operands must be C-contiguous; the update runs on the transposed
    (Fortran-contiguous) views so BLAS accumulates straight into ``c``.
    """
    if counter is not None:
        counter.append((a.shape[0], a.shape[1], b.shape[1]))
    if not (c.flags.c_contiguous and a.flags.c_contiguous and b.flags.c_contiguous):
        c += alpha * (a @ b)
        return c
    out = scipy.linalg.blas.dgemm(
        alpha=alpha, a=b.T, b=a.T, beta=1.0, c=c.T, overwrite_c=True
    )
    if out.base is not c and out.T.base is not c:  # pragma: no cover - safety net
        c[:] = out.T
    return c


def regularized_inverse(s: np.ndarray, rel_tol: float = DEFAULT_SVD_REL_TOL) -> tuple[np.ndarray, bool]:
    """Truncated-SVD pseudo-inverse of a (possibly singular) square block.

    Singular values below ``rel_tol`` times the largest are zeroed.  Returns
    the pseudo-inverse and whether truncation occurred.
    """
    if rel_tol <= 0.0:
        raise ValueError(f"rel_tol must be > 0, got {rel_tol}")
    u, sv, vt = np.linalg.svd(s)
    if sv.size == 0 or sv[0] == 0.0:
        return np.zeros_like(s), True
    keep = sv >= rel_tol * sv[0]
    inv_sv = np.where(keep, 1.0 / np.where(keep, sv, 1.0), 0.0)
    pinv = (vt.T * inv_sv) @ u.T
    return pinv, bool(np.any(~keep))


def _invert_block(
    s: np.ndarray,
    rel_tol: float,
    allow_regularize: bool,
    error: type[InverseUpdateError],
    counter: list | None,
) -> tuple[np.ndarray, bool]:
    """LU inverse when well-conditioned, else truncated-SVD pseudo-inverse."""
    k = s.shape[0]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(s)
        diag = np.abs(np.diag(lu))
        if np.any(diag == 0.0):
            raise scipy.linalg.LinAlgError("exact zero pivot")
        inv = scipy.linalg.lu_solve((lu, piv), np.eye(k))
        cond_est = np.linalg.norm(s, 1) * np.linalg.norm(inv, 1)
        if not np.isfinite(cond_est) or cond_est > _COND_LIMIT:
            raise scipy.linalg.LinAlgError(f"condition estimate {cond_est:.3e}")
        return inv, False
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        if not allow_regularize:
            raise error(f"block of size {k} is singular: {exc}") from exc
        return regularized_inverse(s, rel_tol)


def extend_inverse(
    a_inv: np.ndarray,
    b: np.ndarray,
    c: np.ndarray,
    d: np.ndarray,
    *,
    rel_tol: float = DEFAULT_SVD_REL_TOL,
    allow_regularize: bool = True,
    counter: list | None = None,
    overwrite_a_inv: bool = False,
) -> tuple[np.ndarray, bool]:
    """Inverse of [[A, B], [C, D]] given A^-1, via the Schur complement.

    Returns (inverse, regularized) where ``regularized`` reports whether the
    Schur block needed SVD truncation.  Cost is O(M^2 K + M K^2 + K^3);
    ``overwrite_a_inv`` lets callers that own ``a_inv`` skip one full-size
    copy (the update is memory-bound at moderate sizes).
    """
    m = a_inv.shape[0]
    k = d.shape[0]
    if k == 0:
        return (a_inv if overwrite_a_inv else a_inv.copy()), False
    b = b.reshape(m, k)
    c = c.reshape(k, m)

    x = _mm(a_inv, b, counter)  # A^-1 B            (M x K)
    y = _mm(c, a_inv, counter)  # C A^-1            (K x M)
    s = d - _mm(c, x, counter)  # Schur complement  (K x K)
    s_inv, regularized = _invert_block(
        s, rel_tol, allow_regularize, SingularSchurError, counter
    )
    sy = _mm(s_inv, y, counter)  # S^-1 C A^-1      (K x M)

    tl = a_inv if (overwrite_a_inv and a_inv.flags.writeable) else a_inv.copy()
    _mm_accumulate(tl, x, sy, 1.0, counter)  # A^-1 + A^-1 B S^-1 C A^-1, in place

    out = np.empty((m + k, m + k))
    out[:m, :m] = tl
    out[:m, m:] = -_mm(x, s_inv, counter)
    out[m:, :m] = -sy
    out[m:, m:] = s_inv
    return out, regularized


def shrink_inverse(
    e: np.ndarray,
    f: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    *,
    counter: list | None = None,
    overwrite_e: bool = False,
) -> np.ndarray:
    """Inverse of the leading block after dropping trailing rows/columns.

    (e, f, g, h) partition the current full inverse with the K dropped DOFs
    last; the surviving inverse is E - F H^-1 G.  Cost is O(M^2 K + K^3);
    ``overwrite_e`` skips the defensive copy when the caller owns ``e``.
    """
    m = e.shape[0]
    k = h.shape[0]
    if k == 0:
        return e if overwrite_e else e.copy()
    f = f.reshape(m, k)
    g = g.reshape(k, m)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(h)
        diag = np.abs(np.diag(lu))
        if np.any(diag == 0.0) or diag.min() < 1e-14 * diag.max():
            raise scipy.linalg.LinAlgError("degenerate pivot")
        h_inv_g = np.ascontiguousarray(scipy.linalg.lu_solve((lu, piv), g))
        if counter is not None:
            counter.append((k, k, m))
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise SingularShrinkError(
            f"dropped {k}x{k} inverse block is singular: {exc}"
        ) from exc
    out = e if (overwrite_e and e.flags.writeable) else e.copy()
    _mm_accumulate(out, f, h_inv_g, -1.0, counter)  # E - F H^-1 G, in place
    return out


@dataclass(frozen=True)
class InverseState:
    """Explicitly maintained system matrix and inverse.

    ``matrix`` mirrors what a fresh assembly of the current boundary would
    produce (entries are pairwise local); ``element_order`` fixes the DOF
    layout, 6 per element.  ``drift`` is the infinity norm of M M^-1 - I
    from the last audit.
    """

    matrix: np.ndarray
    inverse: np.ndarray
    element_order: tuple[FaceKey, ...]
    drift: float
    regularized: bool = False

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def dof_map(self) -> dict[FaceKey, int]:
        return {key: 6 * i for i, key in enumerate(self.element_order)}

    @classmethod
    def from_system(cls, system: BemSystem) -> "InverseState":
        inverse = np.linalg.inv(system.matrix)
        drift = _drift_norm(system.matrix, inverse)
        return cls(
            matrix=system.matrix.copy(),
            inverse=inverse,
            element_order=system.model.keys(),
            drift=drift,
        )

    def as_system(self, model: BoundaryModel, mat: Material, rhs: np.ndarray) -> BemSystem:
        """View the maintained matrix as a solvable system for ``model``."""
        if set(model.keys()) != set(self.element_order):
            raise InverseUpdateError("inverse state does not match the boundary model")
        return BemSystem(
            matrix=self.matrix,
            rhs=rhs,
            dof_map=self.dof_map,
            n=self.n,
            model=model,
            material=mat,
        )


def _drift_norm(matrix: np.ndarray, inverse: np.ndarray) -> float:
    n = matrix.shape[0]
    resid = matrix @ inverse
    resid[np.diag_indices(n)] -= 1.0
    return float(np.abs(resid).sum(axis=1).max())


def audit_drift(
    state: InverseState, refresh_threshold: float = DEFAULT_REFRESH_THRESHOLD
) -> InverseState:
    """Measure inverse drift; refresh from a full LU inversion if excessive."""
    drift = _drift_norm(state.matrix, state.inverse)
    if drift > refresh_threshold:
        inverse = np.linalg.inv(state.matrix)
        drift = _drift_norm(state.matrix, inverse)
        return replace(state, inverse=inverse, drift=drift, regularized=False)
    return replace(state, drift=drift)


def _dof_indices(order: tuple[FaceKey, ...], keys) -> np.ndarray:
    pos = {key: i for i, key in enumerate(order)}
    idx = np.array([pos[k] for k in keys], dtype=int)
    return (6 * idx[:, None] + np.arange(6)[None, :]).ravel()


def apply_diff(
    state: InverseState,
    model_new: BoundaryModel,
    mat: Material,
    diff: BoundaryDiff,
    *,
    refresh_threshold: float = DEFAULT_REFRESH_THRESHOLD,
    svd_rel_tol: float = DEFAULT_SVD_REL_TOL,
    audit: bool = True,
    counter: list | None = None,
    timings: dict | None = None,
) -> InverseState:
    """Carry the inverse across a remesh: shrink removals, extend additions.

    Influence blocks are recomputed only for pairs involving new elements.
    Any numerical failure, or an audited drift above ``refresh_threshold``,
    triggers a full refresh from the maintained matrix.  ``timings`` (if
    given) collects the audit seconds under key "audit".
    """
    removed = set(diff.removed)
    if not removed <= set(state.element_order):
        raise InverseUpdateError("diff removes elements unknown to the inverse state")
    if set(diff.added) != set(model_new.keys()) - (set(state.element_order) - removed):
        raise InverseUpdateError("diff additions do not match the new boundary model")

    if diff.empty:
        return state

    keep_keys = tuple(k for k in state.element_order if k not in removed)
    added_keys = tuple(sorted(diff.added))
    need_refresh = False
    regularized = state.regularized

    if removed:
        keep_idx = _dof_indices(state.element_order, keep_keys)
        drop_idx = _dof_indices(state.element_order, sorted(removed))
        inv = state.inverse
        try:
            inverse = shrink_inverse(
                inv[np.ix_(keep_idx, keep_idx)],
                inv[np.ix_(keep_idx, drop_idx)],
                inv[np.ix_(drop_idx, keep_idx)],
                inv[np.ix_(drop_idx, drop_idx)],
                counter=counter,
            )
        except SingularShrinkError:
            inverse = None
            need_refresh = True
        matrix = state.matrix[np.ix_(keep_idx, keep_idx)]
    else:
        matrix, inverse = state.matrix, state.inverse

    if added_keys:
        b = system_blocks(model_new, mat, keep_keys, added_keys)
        c = system_blocks(model_new, mat, added_keys, keep_keys)
        d = system_blocks(model_new, mat, added_keys, added_keys)
        m = matrix.shape[0]
        k = 6 * len(added_keys)
        grown = np.empty((m + k, m + k))
        grown[:m, :m] = matrix
        grown[:m, m:] = b
        grown[m:, :m] = c
        grown[m:, m:] = d
        matrix = grown
        if inverse is not None:
            try:
                inverse, reg = extend_inverse(
                    inverse, b, c, d, rel_tol=svd_rel_tol, counter=counter
                )
                regularized = regularized or reg
            except SingularSchurError:
                inverse = None
                need_refresh = True
    order = keep_keys + added_keys

    if inverse is None:
        inverse = np.linalg.inv(matrix)
        regularized = False

    new_state = InverseState(
        matrix=matrix,
        inverse=inverse,
        element_order=order,
        drift=state.drift,
        regularized=regularized,
    )
    if audit or need_refresh:
        t0 = time.perf_counter()
        new_state = audit_drift(new_state, refresh_threshold)
        if timings is not None:
            timings["audit"] = timings.get("audit", 0.0) + time.perf_counter() - t0
    return new_state
