"""Topological derivative of the strain-energy functional and its cutoff.

The derivative measures the sensitivity of global compliance to nucleating
an infinitesimal cavity at a point; cells whose value falls below the
cutoff level are candidates for removal.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .bem import BoundarySolution, DistanceViolationError, interior_fields
from .model import BoundaryModel, Material

__all__ = [
    "TdSample",
    "TdField",
    "topological_derivative",
    "cutoff",
    "td_field",
]


def topological_derivative(sigma: np.ndarray, epsilon: np.ndarray, nu: float) -> np.ndarray:
    """Plane-strain topological derivative of the strain energy.

    ``D = 2/((1+nu)(1-2nu)) * sigma:eps
        + (1-nu)(4nu-1)/(2(1-2nu)) * tr(sigma) tr(eps)``

    with the full tensor contraction sigma:eps.  Works on stacked (..., 2, 2)
    inputs; zero body force assumed.
    """
    if not 0.0 <= nu < 0.5:
        raise ValueError(f"poisson ratio must satisfy 0 <= nu < 0.5, got {nu}")
    sigma = np.asarray(sigma, dtype=float)
    epsilon = np.asarray(epsilon, dtype=float)
    contraction = np.einsum("...ij,...ij->...", sigma, epsilon)
    tr_s = np.trace(sigma, axis1=-2, axis2=-1)
    tr_e = np.trace(epsilon, axis1=-2, axis2=-1)
    c1 = 2.0 / ((1.0 + nu) * (1.0 - 2.0 * nu))
    c2 = (1.0 - nu) * (4.0 * nu - 1.0) / (2.0 * (1.0 - 2.0 * nu))
    return c1 * contraction + c2 * tr_s * tr_e


def cutoff(d_min: float, d_max: float, alpha: float) -> float:
    """Removal cutoff level ``d_min + alpha * (d_max - d_min)``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"cutoff fraction must be in [0, 1], got {alpha}")
    if d_min > d_max:
        raise ValueError(f"d_min {d_min} exceeds d_max {d_max}")
    return float(d_min + alpha * (d_max - d_min))


@dataclass(frozen=True)
class TdSample:
    """Derivative value at one evaluation point.

    ``cells`` lists the finest-level grid cells the sample stands for (a
    single cell for uniform sampling, a 2x2 or larger block for coarse
    quadtree leaves).
    """

    point: tuple[float, float]
    cells: tuple[int, ...]
    value: float


@dataclass(frozen=True)
class TdField:
    """Sampled derivative field with extrema and the removal cutoff."""

    samples: tuple[TdSample, ...]
    d_min: float
    d_max: float
    cutoff: float
    alpha: float

    def cell_values(self) -> dict[int, float]:
        """Finest-level cell index -> derivative value."""
        out: dict[int, float] = {}
        for s in self.samples:
            for c in s.cells:
                out[c] = s.value
        return out


def td_field(
    points: Sequence[tuple[np.ndarray, int | Iterable[int]]],
    sol: BoundarySolution,
    model: BoundaryModel,
    mat: Material,
    alpha: float,
) -> TdField:
    """Evaluate the derivative at the given (point, cell) samples.

    ``points`` pairs each evaluation point with the finest-level cell index
    (or indices) it covers.  All points must satisfy the interior stand-off;
    violations raise DistanceViolationError naming the offending cells.
    """
    if not points:
        raise ValueError("td_field needs at least one sample point")
    pts = np.array([np.asarray(p, dtype=float) for p, _ in points])
    cells: list[tuple[int, ...]] = []
    for _, c in points:
        cells.append((int(c),) if np.isscalar(c) else tuple(int(x) for x in c))

    try:
        _, sigma, eps = interior_fields(pts, sol, model, mat, need_displacement=False)
    except DistanceViolationError as exc:
        offending = [cells[i] for i in exc.point_indices]
        raise DistanceViolationError(
            f"sample points of cells {offending} violate the boundary stand-off",
            exc.point_indices,
        ) from exc

    values = topological_derivative(sigma, eps, mat.poisson_ratio)
    d_min = float(values.min())
    d_max = float(values.max())
    samples = tuple(
        TdSample(point=(float(p[0]), float(p[1])), cells=c, value=float(v))
        for p, c, v in zip(pts, cells, values)
    )
    return TdField(
        samples=samples,
        d_min=d_min,
        d_max=d_max,
        cutoff=cutoff(d_min, d_max, alpha),
        alpha=alpha,
    )
