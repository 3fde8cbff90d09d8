"""Interior evaluation points: uniform cell centers or quadtree refinement.

The quadtree starts from the coarsest level, classifies cell-block centers,
and refines wherever face-neighboring blocks disagree (both sides of a
mismatch split into 2x2 children) until the finest level.  Blocks that are
void in the current grid are skipped without evaluation; blocks mixing
material and void are refined unconditionally.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .model import CellGrid

__all__ = [
    "QuadtreeSample",
    "QuadtreePlan",
    "uniform_points",
    "quadtree_refine",
]


def uniform_points(grid: CellGrid) -> list[tuple[np.ndarray, int]]:
    """(center, cell index) for every material cell; void cells skipped."""
    return [(grid.cell_center(int(i)), int(i)) for i in grid.material_indices()]


@dataclass(frozen=True)
class QuadtreeSample:
    """One classify evaluation: block (level, index) and its center."""

    level: int
    index: int
    center: tuple[float, float]


@dataclass(frozen=True)
class QuadtreePlan:
    """Result of quadtree sampling over a status grid.

    ``leaves`` holds (level, index, status) for every undivided block;
    ``samples`` the classify evaluations in call order; ``fine_status`` the
    leaf statuses painted onto the finest grid.  ``eval_count`` counts
    classify evaluations (void blocks cost nothing).
    """

    levels: int
    fine_shape: tuple[int, int]  # (ny, nx) at the finest level
    leaves: tuple[tuple[int, int, int], ...]
    samples: tuple[QuadtreeSample, ...]
    refined: tuple[tuple[int, ...], ...]
    eval_count: int
    fine_status: np.ndarray

    @property
    def leaf_count(self) -> int:
        return len(self.leaves)

    def block_extent(self, level: int, index: int) -> tuple[int, int, int, int]:
        """Fine-grid (row0, row1, col0, col1) covered by a block, half-open."""
        f = 2 ** (self.levels - 1 - level)
        nx_l = self.fine_shape[1] // f
        row, col = divmod(index, nx_l)
        return row * f, (row + 1) * f, col * f, (col + 1) * f

    def covered_fine_cells(self, level: int, index: int) -> tuple[int, ...]:
        """Flat finest-level cell indices covered by a block."""
        r0, r1, c0, c1 = self.block_extent(level, index)
        nx = self.fine_shape[1]
        return tuple(
            int(r * nx + c) for r in range(r0, r1) for c in range(c0, c1)
        )


def _as_batch_classifier(classify: Callable) -> Callable[[np.ndarray], np.ndarray]:
    """Accept either a vectorized classifier or a scalar point -> status one."""

    def batched(points: np.ndarray) -> np.ndarray:
        out = classify(points)
        if np.isscalar(out):
            raise TypeError("classifier returned a scalar for a batch of points")
        out = np.asarray(out)
        if out.shape == (len(points),):
            return out.astype(np.uint8)
        raise TypeError(
            f"classifier returned shape {out.shape} for {len(points)} points"
        )

    def fallback(points: np.ndarray) -> np.ndarray:
        return np.array([int(classify(p)) for p in points], dtype=np.uint8)

    def dispatch(points: np.ndarray) -> np.ndarray:
        try:
            return batched(points)
        except TypeError:
            return fallback(points)

    return dispatch


def quadtree_refine(
    grid: CellGrid,
    classify: Callable,
    levels: int,
) -> QuadtreePlan:
    """Build the quadtree sampling plan over the current material layout.

    ``grid`` carries the statuses at the finest level (its dimensions must
    be divisible by 2**(levels-1)); ``classify`` maps points (n, 2) to
    statuses (n,), called first with every coarsest-level material-block
    center in index order, then with the centers of newly created children,
    batch by batch.  Deterministic for fixed inputs.
    """
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    factor = 2 ** (levels - 1)
    if grid.nx % factor or grid.ny % factor:
        raise ValueError(
            f"grid {grid.nx}x{grid.ny} not divisible by refinement factor {factor}"
        )
    classify_batch = _as_batch_classifier(classify)

    ny_f, nx_f = grid.ny, grid.nx
    fine = grid.status.astype(np.int64)
    # Material-cell counts per block, per level (index 0 = coarsest).
    counts: list[np.ndarray] = []
    for lv in range(levels):
        f = 2 ** (levels - 1 - lv)
        counts.append(
            fine.reshape(ny_f // f, f, nx_f // f, f).sum(axis=(1, 3))
        )

    h_f = grid.cell_size
    ox, oy = grid.origin

    def block_center(level: int, index: int) -> tuple[float, float]:
        f = 2 ** (levels - 1 - level)
        nx_l = nx_f // f
        row, col = divmod(index, nx_l)
        h_l = h_f * f
        return (ox + (col + 0.5) * h_l, oy + (row + 0.5) * h_l)

    def block_extent(level: int, index: int) -> tuple[int, int, int, int]:
        f = 2 ** (levels - 1 - level)
        nx_l = nx_f // f
        row, col = divmod(index, nx_l)
        return row * f, (row + 1) * f, col * f, (col + 1) * f

    leaves: dict[tuple[int, int], int] = {}
    refined: list[list[int]] = [[] for _ in range(levels)]
    samples: list[QuadtreeSample] = []
    img = np.zeros((ny_f, nx_f), dtype=np.uint8)
    cover_level = np.zeros((ny_f, nx_f), dtype=np.int16)

    def paint(level: int, index: int, status: int) -> None:
        r0, r1, c0, c1 = block_extent(level, index)
        img[r0:r1, c0:c1] = status
        cover_level[r0:r1, c0:c1] = level

    def children_of(level: int, index: int) -> list[tuple[int, int]]:
        f = 2 ** (levels - 1 - level)
        nx_l = nx_f // f
        row, col = divmod(index, nx_l)
        nx_c = nx_l * 2
        return [
            (level + 1, (2 * row + dr) * nx_c + (2 * col + dc))
            for dr in (0, 1)
            for dc in (0, 1)
        ]

    def resolve(pending: list[tuple[int, int]]) -> None:
        """Classify or split blocks, batching classify calls per round."""
        while pending:
            uniform: list[tuple[int, int]] = []
            deeper: list[tuple[int, int]] = []
            for lv, idx in pending:
                f = 2 ** (levels - 1 - lv)
                c = int(counts[lv].ravel()[idx])
                if c == 0:
                    leaves[(lv, idx)] = 0
                    paint(lv, idx, 0)
                elif c < f * f:
                    # mixed material/void: must refine to resolve
                    refined[lv].append(idx)
                    deeper.extend(children_of(lv, idx))
                else:
                    uniform.append((lv, idx))
            if uniform:
                centers = np.array([block_center(lv, idx) for lv, idx in uniform])
                statuses = classify_batch(centers)
                for (lv, idx), st, ctr in zip(uniform, statuses, centers):
                    leaves[(lv, idx)] = int(st)
                    paint(lv, idx, int(st))
                    samples.append(
                        QuadtreeSample(level=lv, index=idx, center=(ctr[0], ctr[1]))
                    )
            pending = deeper

    # Coarsest level first, then neighbor-status mismatch fixpoint.
    nx0, ny0 = nx_f // factor, ny_f // factor
    resolve([(0, i) for i in range(nx0 * ny0)])

    def covering_block(r: int, c: int) -> tuple[int, int]:
        lv = int(cover_level[r, c])
        f = 2 ** (levels - 1 - lv)
        nx_l = nx_f // f
        return lv, (r // f) * nx_l + (c // f)

    while True:
        to_refine: set[tuple[int, int]] = set()
        hmis = np.nonzero(img[:, 1:] != img[:, :-1])
        for r, c in zip(*hmis):
            for cc in (c, c + 1):
                lv, idx = covering_block(int(r), int(cc))
                if lv < levels - 1:
                    to_refine.add((lv, idx))
        vmis = np.nonzero(img[1:, :] != img[:-1, :])
        for r, c in zip(*vmis):
            for rr in (r, r + 1):
                lv, idx = covering_block(int(rr), int(c))
                if lv < levels - 1:
                    to_refine.add((lv, idx))
        if not to_refine:
            break
        pending: list[tuple[int, int]] = []
        for lv, idx in sorted(to_refine):
            del leaves[(lv, idx)]
            refined[lv].append(idx)
            pending.extend(children_of(lv, idx))
        resolve(pending)

    leaf_tuple = tuple(
        (lv, idx, st) for (lv, idx), st in sorted(leaves.items())
    )
    return QuadtreePlan(
        levels=levels,
        fine_shape=(ny_f, nx_f),
        leaves=leaf_tuple,
        samples=tuple(samples),
        refined=tuple(tuple(sorted(r)) for r in refined),
        eval_count=len(samples),
        fine_status=img,
    )
