"""Cell classification and boundary regeneration.

Each iteration kills cells whose topological derivative falls below the
cutoff, prunes isolated cells and material disconnected from the supports,
then rebuilds boundary elements on every material/void face.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import ndimage

from .model import (
    FACE_EAST,
    FACE_NORTH,
    FACE_OFFSETS,
    FACE_SOUTH,
    FACE_WEST,
    BoundaryCondition,
    BoundaryElement,
    BoundaryModel,
    CellGrid,
    FaceKey,
    traction_free,
)
from .topoderiv import TdField

__all__ = [
    "BoundaryDiff",
    "classify_cells",
    "generate_boundary",
    "diff_boundaries",
]

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class BoundaryDiff:
    """Added/removed element identities between two boundaries."""

    added: tuple[FaceKey, ...]
    removed: tuple[FaceKey, ...]

    @property
    def n_a(self) -> int:
        return len(self.added)

    @property
    def n_r(self) -> int:
        return len(self.removed)

    @property
    def empty(self) -> bool:
        return not self.added and not self.removed


def _neighbor_count(status: np.ndarray) -> np.ndarray:
    """Number of material face-neighbors per cell (exterior counts void)."""
    padded = np.pad(status, 1, constant_values=0)
    return (
        padded[1:-1, :-2] + padded[1:-1, 2:] + padded[:-2, 1:-1] + padded[2:, 1:-1]
    )


def classify_cells(grid: CellGrid, field: TdField) -> CellGrid:
    """Apply removal rules and return the updated grid.

    Kills unprotected cells with value strictly below the cutoff, then
    isolated cells (no material face-neighbor), then everything not
    face-connected to a protected cell.  Protected cells always survive.
    """
    values = field.cell_values()
    status = grid.status.copy()
    flat = status.ravel()
    protected_flat = grid.protected.ravel()

    alive = np.flatnonzero(flat)
    missing = [int(i) for i in alive if not protected_flat[i] and int(i) not in values]
    if missing:
        raise ValueError(
            f"derivative field does not cover material cells {missing[:8]}"
            + ("..." if len(missing) > 8 else "")
        )
    out_of_range = [c for c in values if not 0 <= c < grid.n_cells]
    if out_of_range:
        raise ValueError(f"field references cells outside the grid: {out_of_range[:8]}")

    # Kill stage: strictly below the cutoff, ties survive.
    for i in alive:
        i = int(i)
        if protected_flat[i]:
            continue
        if i in values and values[i] < field.cutoff:
            flat[i] = 0

    status = flat.reshape(grid.ny, grid.nx)

    # Isolated cells: material with no material face-neighbor.
    isolated = (status == 1) & (_neighbor_count(status) == 0) & ~grid.protected
    status[isolated] = 0

    # Keep only material face-connected to a protected cell.
    if grid.protected.any():
        labels, _ = ndimage.label(status, structure=_FOUR_CONNECTED)
        keep = np.unique(labels[grid.protected & (labels > 0)])
        status = np.where(np.isin(labels, keep) & (labels > 0), 1, 0).astype(np.uint8)

    status[grid.protected] = 1
    return grid.with_status(status)


def _face_geometry(grid: CellGrid, cell: int, face: int):
    # Grid-line coordinates are computed as origin + k*h for the lattice
    # index k so that adjacent cells share bitwise-identical vertices.
    col, row = grid.col_row(cell)
    h = grid.cell_size
    x0, x1 = grid.origin[0] + col * h, grid.origin[0] + (col + 1) * h
    y0, y1 = grid.origin[1] + row * h, grid.origin[1] + (row + 1) * h
    if face == FACE_EAST:
        return (x1, y0), (x1, y1), (1.0, 0.0)
    if face == FACE_NORTH:
        return (x1, y1), (x0, y1), (0.0, 1.0)
    if face == FACE_WEST:
        return (x0, y1), (x0, y0), (-1.0, 0.0)
    if face == FACE_SOUTH:
        return (x0, y0), (x1, y0), (0.0, -1.0)
    raise ValueError(f"unknown face code {face}")


def generate_boundary(
    grid: CellGrid,
    bc_assigner: Callable[[FaceKey], BoundaryCondition] | None = None,
) -> BoundaryModel:
    """One element per material/void face; default traction-free Neumann.

    Elements are oriented with material on the left of p0 -> p1, normals
    pointing into the void, and are ordered by (cell index, face code).
    """
    if not grid.status.any():
        raise ValueError("no material cells; cannot generate a boundary")
    if bc_assigner is None:
        bc_assigner = lambda key: traction_free()  # noqa: E731

    status = grid.status
    elements: list[BoundaryElement] = []
    rows, cols = np.nonzero(status)
    order = np.argsort(rows * grid.nx + cols, kind="stable")
    for row, col in zip(rows[order], cols[order]):
        cell = grid.index(int(col), int(row))
        for face, (dc, dr) in enumerate(FACE_OFFSETS):
            if grid.status_at(int(col) + dc, int(row) + dr) == 0:
                key: FaceKey = (cell, face)
                p0, p1, normal = _face_geometry(grid, cell, face)
                elements.append(
                    BoundaryElement(
                        face_key=key, p0=p0, p1=p1, normal=normal, bc=bc_assigner(key)
                    )
                )
    elements.sort(key=lambda e: e.face_key)
    return BoundaryModel(elements)


def diff_boundaries(old: BoundaryModel, new: BoundaryModel) -> BoundaryDiff:
    """Element identity diff; unchanged faces keep their ids."""
    old_keys = set(old.keys())
    new_keys = set(new.keys())
    return BoundaryDiff(
        added=tuple(sorted(new_keys - old_keys)),
        removed=tuple(sorted(old_keys - new_keys)),
    )
