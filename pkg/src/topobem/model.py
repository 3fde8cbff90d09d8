"""Domain types shared by the solver, sampler, remesher and optimizer.

Geometry lives on a rectangular grid of square cells with Boolean material
status.  Boundaries are straight elements sitting on cell faces, each with
three element-local collocation points and a single boundary condition.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Material",
    "CellGrid",
    "BoundaryCondition",
    "BoundaryElement",
    "BoundaryModel",
    "FaceKey",
    "FACE_EAST",
    "FACE_NORTH",
    "FACE_WEST",
    "FACE_SOUTH",
    "FACE_NORMALS",
    "COLLOCATION_PARAMS",
    "cell_center",
    "dirichlet",
    "neumann",
    "traction_free",
]

# Face codes, fixed order: east, north, west, south.
FACE_EAST, FACE_NORTH, FACE_WEST, FACE_SOUTH = 0, 1, 2, 3
FACE_NORMALS = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
FACE_OFFSETS = ((1, 0), (0, 1), (-1, 0), (0, -1))  # (dcol, drow) per face

# Element-local collocation positions (discontinuous quadratic elements).
COLLOCATION_PARAMS = (0.25, 0.5, 0.75)

#: (cell index, face code) identifying the grid face an element sits on.
FaceKey = tuple[int, int]


@dataclass(frozen=True)
class Material:
    """Isotropic plane-strain material."""

    young_modulus: float
    poisson_ratio: float

    def __post_init__(self) -> None:
        if not self.young_modulus > 0.0:
            raise ValueError(f"young_modulus must be > 0, got {self.young_modulus}")
        if not 0.0 <= self.poisson_ratio < 0.5:
            # nu = 0.5 makes the 1 - 2*nu denominators vanish
            raise ValueError(
                f"poisson_ratio must satisfy 0 <= nu < 0.5, got {self.poisson_ratio}"
            )

    @property
    def shear_modulus(self) -> float:
        return self.young_modulus / (2.0 * (1.0 + self.poisson_ratio))

    @property
    def lame_lambda(self) -> float:
        E, nu = self.young_modulus, self.poisson_ratio
        return E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class CellGrid:
    """Rectangular grid of square cells with material status and protection.

    Cells are indexed flat, row-major: ``i = row * nx + col``.  Queries
    outside the grid report void (the exterior counts as empty space), so
    the outer boundary emerges from the same face rule as interior cavities.
    Protected cells carry boundary conditions and are never killed.
    """

    origin: tuple[float, float]
    cell_size: float
    nx: int
    ny: int
    status: np.ndarray  # (ny, nx) uint8, 1 = material
    protected: np.ndarray  # (ny, nx) bool
    level: int = 0

    def __post_init__(self) -> None:
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.nx}x{self.ny}")
        if not self.cell_size > 0.0:
            raise ValueError(f"cell_size must be > 0, got {self.cell_size}")
        status = _readonly(np.asarray(self.status, dtype=np.uint8))
        protected = _readonly(np.asarray(self.protected, dtype=bool))
        if status.shape != (self.ny, self.nx):
            raise ValueError(f"status shape {status.shape} != ({self.ny}, {self.nx})")
        if protected.shape != (self.ny, self.nx):
            raise ValueError(
                f"protected shape {protected.shape} != ({self.ny}, {self.nx})"
            )
        if np.any(protected & (status == 0)):
            raise ValueError("protected cells must have status 1")
        object.__setattr__(self, "status", status)
        object.__setattr__(self, "protected", protected)

    @classmethod
    def full(
        cls,
        nx: int,
        ny: int,
        cell_size: float = 1.0,
        origin: tuple[float, float] = (0.0, 0.0),
        protected: np.ndarray | None = None,
        level: int = 0,
    ) -> "CellGrid":
        """All-material grid, optionally with a protection mask."""
        if protected is None:
            protected = np.zeros((ny, nx), dtype=bool)
        return cls(
            origin=origin,
            cell_size=cell_size,
            nx=nx,
            ny=ny,
            status=np.ones((ny, nx), dtype=np.uint8),
            protected=protected,
            level=level,
        )

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    def col_row(self, i: int) -> tuple[int, int]:
        if not 0 <= i < self.n_cells:
            raise IndexError(f"cell index {i} out of range [0, {self.n_cells})")
        return i % self.nx, i // self.nx

    def index(self, col: int, row: int) -> int:
        return row * self.nx + col

    def status_at(self, col: int, row: int) -> int:
        """Cell status; out-of-range queries report void."""
        if 0 <= col < self.nx and 0 <= row < self.ny:
            return int(self.status[row, col])
        return 0

    def material_indices(self) -> np.ndarray:
        """Flat indices of all material cells, ascending."""
        return np.flatnonzero(self.status.ravel())

    def volume_fraction(self) -> float:
        """Material area over the full initial grid area."""
        return float(self.status.sum()) / self.n_cells

    def with_status(self, status: np.ndarray) -> "CellGrid":
        return CellGrid(
            origin=self.origin,
            cell_size=self.cell_size,
            nx=self.nx,
            ny=self.ny,
            status=status,
            protected=self.protected.copy(),
            level=self.level,
        )

    def cell_center(self, i: int) -> np.ndarray:
        col, row = self.col_row(i)
        h = self.cell_size
        return np.array(
            [self.origin[0] + (col + 0.5) * h, self.origin[1] + (row + 0.5) * h]
        )

    def cell_origin(self, i: int) -> np.ndarray:
        col, row = self.col_row(i)
        h = self.cell_size
        return np.array([self.origin[0] + col * h, self.origin[1] + row * h])


def cell_center(grid: CellGrid, i: int) -> np.ndarray:
    """Center of cell ``i``: origin + ((col + 0.5) h, (row + 0.5) h)."""
    return grid.cell_center(i)


@dataclass(frozen=True)
class BoundaryCondition:
    """Boundary condition of a single element: full Dirichlet or full Neumann.

    ``value`` is either a constant 2-vector or a callable mapping points
    (n, 2) to values (n, 2); callables support verification problems with
    spatially varying prescribed data.
    """

    kind: str  # "dirichlet" | "neumann"
    value: object

    def __post_init__(self) -> None:
        if self.kind not in ("dirichlet", "neumann"):
            raise ValueError(f"unknown boundary condition kind {self.kind!r}")

    def resolve(self, points: np.ndarray) -> np.ndarray:
        """Prescribed values at the given points, shape (n, 2)."""
        points = np.atleast_2d(points)
        if callable(self.value):
            vals = np.asarray(self.value(points), dtype=float)
            if vals.shape != points.shape:
                raise ValueError(
                    f"boundary value callable returned shape {vals.shape}, "
                    f"expected {points.shape}"
                )
            return vals
        vals = np.asarray(self.value, dtype=float).reshape(2)
        return np.broadcast_to(vals, points.shape).copy()


def dirichlet(value) -> BoundaryCondition:
    return BoundaryCondition("dirichlet", value)


def neumann(value) -> BoundaryCondition:
    return BoundaryCondition("neumann", value)


def traction_free() -> BoundaryCondition:
    return BoundaryCondition("neumann", np.zeros(2))


@dataclass(frozen=True)
class BoundaryElement:
    """Straight boundary element on a cell face.

    Oriented so the material lies on the left of p0 -> p1; the unit normal
    points from material into void/exterior.  ``face_key`` doubles as the
    stable element identity across remeshes.
    """

    face_key: FaceKey
    p0: tuple[float, float]
    p1: tuple[float, float]
    normal: tuple[float, float]
    bc: BoundaryCondition

    def __post_init__(self) -> None:
        if self.p0 == self.p1:
            raise ValueError("element endpoints must be distinct")

    @property
    def element_id(self) -> FaceKey:
        return self.face_key

    @property
    def length(self) -> float:
        dx = self.p1[0] - self.p0[0]
        dy = self.p1[1] - self.p0[1]
        return float(np.hypot(dx, dy))

    @property
    def collocation_points(self) -> np.ndarray:
        """Three interior points at parametric {0.25, 0.5, 0.75}, shape (3, 2)."""
        p0 = np.asarray(self.p0)
        p1 = np.asarray(self.p1)
        zeta = np.asarray(COLLOCATION_PARAMS)[:, None]
        return p0 + zeta * (p1 - p0)


class BoundaryModel:
    """Ordered collection of boundary elements forming closed loops.

    Precomputes packed geometry arrays used by the assembly and field
    evaluation routines.
    """

    def __init__(self, elements: Sequence[BoundaryElement]):
        if not elements:
            raise ValueError("boundary model needs at least one element")
        keys = [e.face_key for e in elements]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate face_key in element set")
        self.elements: tuple[BoundaryElement, ...] = tuple(elements)
        self.element_index: dict[FaceKey, int] = {
            e.face_key: pos for pos, e in enumerate(self.elements)
        }
        self.endpoints = _readonly(
            np.array([[e.p0, e.p1] for e in self.elements])
        )  # (E, 2, 2)
        self.normals = _readonly(np.array([e.normal for e in self.elements]))
        self.lengths = _readonly(
            np.linalg.norm(self.endpoints[:, 1] - self.endpoints[:, 0], axis=1)
        )
        self.tangents = _readonly(
            (self.endpoints[:, 1] - self.endpoints[:, 0]) / self.lengths[:, None]
        )
        zeta = np.asarray(COLLOCATION_PARAMS)
        self.collocation = _readonly(
            self.endpoints[:, None, 0]
            + zeta[None, :, None] * (self.endpoints[:, 1] - self.endpoints[:, 0])[:, None]
        )  # (E, 3, 2)
        self.is_dirichlet = _readonly(
            np.array([e.bc.kind == "dirichlet" for e in self.elements])
        )
        self.prescribed = _readonly(
            np.array([e.bc.resolve(c) for e, c in zip(self.elements, self.collocation)])
        )  # (E, 3, 2)

    @property
    def n_s(self) -> int:
        return len(self.elements)

    @property
    def min_length(self) -> float:
        return float(self.lengths.min())

    def keys(self) -> tuple[FaceKey, ...]:
        return tuple(e.face_key for e in self.elements)

    def subset_positions(self, keys: Iterable[FaceKey]) -> np.ndarray:
        return np.array([self.element_index[k] for k in keys], dtype=int)

    def endpoint_incidence(self) -> dict[tuple[float, float], int]:
        """Endpoint -> number of element endpoints meeting there."""
        counts: dict[tuple[float, float], int] = {}
        for e in self.elements:
            for p in (e.p0, e.p1):
                counts[p] = counts.get(p, 0) + 1
        return counts

    def loops_closed(self) -> bool:
        """True when every vertex joins an even number of element endpoints."""
        return all(c % 2 == 0 for c in self.endpoint_incidence().values())
