"""Hard-kill optimization loop: solve, sample, classify, remesh, update.

Material is removed where the topological derivative falls below the cutoff
level until the volume fraction reaches its target.  The system matrix
inverse is either rebuilt by full factorization every iteration ("lu" mode)
or carried across remeshes by blockwise updates ("block" mode).
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .bem import (
    BemSystem,
    BoundarySolution,
    assemble,
    rhs_vector,
    solve,
    strain_energy,
    interior_fields,
)
from .inverse_update import InverseState, apply_diff
from .model import (
    FACE_EAST,
    FACE_NORTH,
    FACE_SOUTH,
    FACE_WEST,
    BoundaryCondition,
    BoundaryModel,
    CellGrid,
    FaceKey,
    Material,
    dirichlet,
    neumann,
    traction_free,
)
from .remesh import BoundaryDiff, classify_cells, diff_boundaries, generate_boundary
from .sampler import QuadtreePlan, quadtree_refine, uniform_points
from .topoderiv import TdField, TdSample, cutoff, td_field, topological_derivative

__all__ = [
    "LoadSpec",
    "OptimizationConfig",
    "IterationRecord",
    "IterationContext",
    "OptimizationState",
    "OptimizationError",
    "build_problem",
    "run",
]

_EDGES = ("left", "right", "bottom", "top")


@dataclass(frozen=True)
class LoadSpec:
    """Point-like load on one boundary face of the initial square.

    ``edge`` names the side; ``anchor`` picks the cell along it ("min",
    "max", or an explicit finest-level index); ``force`` is the resultant,
    applied as a statically equivalent uniform traction force/h over the
    single finest-level face.
    """

    edge: str
    anchor: str | int
    force: tuple[float, float]

    def __post_init__(self) -> None:
        if self.edge not in _EDGES:
            raise ValueError(f"load edge must be one of {_EDGES}, got {self.edge!r}")
        if isinstance(self.anchor, str) and self.anchor not in ("min", "max"):
            raise ValueError(f"load anchor must be 'min', 'max' or an index")


@dataclass(frozen=True)
class OptimizationConfig:
    """Everything a run needs: grid, material, cutoff, stopping, solver."""

    material: Material = Material(1.0, 0.3)
    nx: int = 20
    ny: int = 20
    cell_size: float = 1.0
    levels: int = 1
    cutoff_fraction: float = 0.003
    target_volume_fraction: float = 0.5
    max_iterations: int = 200
    solver_mode: str = "block"
    clamped_edges: tuple[str, ...] = ("left",)
    loads: tuple[LoadSpec, ...] = (LoadSpec("right", "max", (0.0, -1.0)),)
    audit_stride: int = 1
    refresh_threshold: float = 1e-6
    svd_rel_tol: float = 1e-10
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid must be at least 1x1")
        if self.cell_size <= 0.0:
            raise ValueError("cell_size must be > 0")
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if not 0.0 <= self.cutoff_fraction <= 1.0:
            raise ValueError(
                f"cutoff_fraction must be in [0, 1], got {self.cutoff_fraction}"
            )
        if not 0.0 < self.target_volume_fraction < 1.0:
            raise ValueError(
                "target_volume_fraction must be in (0, 1), got "
                f"{self.target_volume_fraction}"
            )
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.solver_mode not in ("lu", "block"):
            raise ValueError(f"solver_mode must be 'lu' or 'block', got {self.solver_mode!r}")
        for edge in self.clamped_edges:
            if edge not in _EDGES:
                raise ValueError(f"clamped edge must be one of {_EDGES}, got {edge!r}")
        if not self.clamped_edges and not self.loads:
            raise ValueError("at least one clamped edge or load is required")
        if self.audit_stride < 1:
            raise ValueError("audit_stride must be >= 1")

    @property
    def refinement_factor(self) -> int:
        return 2 ** (self.levels - 1)

    @property
    def fine_nx(self) -> int:
        return self.nx * self.refinement_factor

    @property
    def fine_ny(self) -> int:
        return self.ny * self.refinement_factor

    @property
    def fine_cell_size(self) -> float:
        return self.cell_size / self.refinement_factor


def _edge_cells(config: OptimizationConfig, edge: str) -> list[tuple[int, int]]:
    nx, ny = config.fine_nx, config.fine_ny
    if edge == "left":
        return [(0, r) for r in range(ny)]
    if edge == "right":
        return [(nx - 1, r) for r in range(ny)]
    if edge == "bottom":
        return [(c, 0) for c in range(nx)]
    return [(c, ny - 1) for c in range(ny)] if edge == "top" else []


def _edge_face(edge: str) -> int:
    return {"left": FACE_WEST, "right": FACE_EAST, "bottom": FACE_SOUTH, "top": FACE_NORTH}[edge]


def _load_cell(config: OptimizationConfig, load: LoadSpec) -> tuple[int, int]:
    nx, ny = config.fine_nx, config.fine_ny
    along = ny if load.edge in ("left", "right") else nx
    if load.anchor == "min":
        idx = 0
    elif load.anchor == "max":
        idx = along - 1
    else:
        idx = int(load.anchor)
        if not 0 <= idx < along:
            raise ValueError(f"load anchor {idx} outside edge of length {along}")
    if load.edge == "left":
        return (0, idx)
    if load.edge == "right":
        return (nx - 1, idx)
    if load.edge == "bottom":
        return (idx, 0)
    return (idx, ny - 1)


def build_problem(
    config: OptimizationConfig,
) -> tuple[CellGrid, Callable[[FaceKey], BoundaryCondition]]:
    """Initial finest-level grid (with protected cells) and the BC assigner.

    Cells carrying supports or loads are protected from removal; every other
    generated face defaults to traction-free.
    """
    nx, ny = config.fine_nx, config.fine_ny
    protected = np.zeros((ny, nx), dtype=bool)
    clamp_faces: set[FaceKey] = set()
    for edge in config.clamped_edges:
        face = _edge_face(edge)
        for col, row in _edge_cells(config, edge):
            protected[row, col] = True
            clamp_faces.add((row * nx + col, face))

    h = config.fine_cell_size
    load_faces: dict[FaceKey, BoundaryCondition] = {}
    for load in config.loads:
        col, row = _load_cell(config, load)
        protected[row, col] = True
        traction = (load.force[0] / h, load.force[1] / h)
        load_faces[(row * nx + col, _edge_face(load.edge))] = neumann(traction)

    grid = CellGrid.full(nx, ny, cell_size=h, protected=protected)

    def bc_assigner(key: FaceKey) -> BoundaryCondition:
        if key in load_faces:
            return load_faces[key]
        if key in clamp_faces:
            return dirichlet((0.0, 0.0))
        return traction_free()

    return grid, bc_assigner


@dataclass(frozen=True)
class IterationRecord:
    """One optimization iteration: solved state, removal, and phase times."""

    k: int
    volume_fraction: float
    energy: float
    n_s: int
    n_a: int
    n_r: int
    t_assemble: float
    t_solve: float
    t_td: float
    t_remesh: float
    t_update: float
    t_audit: float
    eval_count: int
    drift: float
    grid_after: CellGrid
    model_after: BoundaryModel


@dataclass
class IterationContext:
    """Snapshot handed to the per-iteration callback (observability hook)."""

    k: int
    grid: CellGrid
    model: BoundaryModel
    system: BemSystem
    solution: BoundarySolution
    field: TdField
    new_grid: CellGrid
    new_model: BoundaryModel
    diff: BoundaryDiff
    inverse_state: InverseState | None
    plan: QuadtreePlan | None


@dataclass
class OptimizationState:
    """Final state plus the complete per-iteration history."""

    k: int
    grid: CellGrid
    model: BoundaryModel
    volume_fraction: float
    energy: float
    initial_energy: float
    history: list[IterationRecord]
    termination: str
    config: OptimizationConfig


class OptimizationError(RuntimeError):
    """Raised when an iteration fails; carries the partial state."""

    def __init__(self, message: str, state: OptimizationState | None = None):
        super().__init__(message)
        self.state = state


def _sample_uniform(
    grid: CellGrid,
    sol: BoundarySolution,
    model: BoundaryModel,
    mat: Material,
    alpha: float,
) -> tuple[TdField, None, int]:
    # Cutoff extrema rank removable material only: protected cells are never
    # killed, and letting their (often extreme) values anchor d_min stalls
    # the cutoff above every killable cell.
    protected = grid.protected.ravel()
    points = [(p, i) for p, i in uniform_points(grid) if not protected[i]]
    if not points:
        raise OptimizationError("no removable material cells left to sample")
    field = td_field(points, sol, model, mat, alpha)
    return field, None, len(points)


def _sample_quadtree(
    grid: CellGrid,
    sol: BoundarySolution,
    model: BoundaryModel,
    mat: Material,
    alpha: float,
    levels: int,
) -> tuple[TdField, QuadtreePlan, int]:
    """Quadtree-driven sampling with the cutoff frozen from the first batch.

    The first classify batch covers the coarsest material blocks and fixes a
    provisional cutoff used only for refinement decisions; the field's final
    cutoff comes from the extrema over all evaluations.
    """
    nu = mat.poisson_ratio
    recorded: list[np.ndarray] = []
    provisional: dict[str, float] = {}

    def classify(points: np.ndarray) -> np.ndarray:
        _, sigma, eps = interior_fields(points, sol, model, mat, need_displacement=False)
        values = topological_derivative(sigma, eps, nu)
        if "cutoff" not in provisional:
            provisional["cutoff"] = cutoff(values.min(), values.max(), alpha)
        recorded.append(values)
        return (values >= provisional["cutoff"]).astype(np.uint8)

    plan = quadtree_refine(grid, classify, levels)
    values = np.concatenate(recorded) if recorded else np.empty(0)
    if len(values) != len(plan.samples):
        raise OptimizationError("sampler evaluation bookkeeping out of sync")
    if len(values) == 0:
        raise OptimizationError("quadtree produced no evaluation points")

    # Keep only samples standing for at least one removable cell; fully
    # protected blocks would otherwise anchor the cutoff extrema.
    protected = grid.protected.ravel()
    samples = tuple(
        TdSample(
            point=s.center,
            cells=plan.covered_fine_cells(s.level, s.index),
            value=float(v),
        )
        for s, v in zip(plan.samples, values)
        if not all(protected[c] for c in plan.covered_fine_cells(s.level, s.index))
    )
    if not samples:
        raise OptimizationError("no removable material cells left to sample")
    kept = np.array([s.value for s in samples])
    d_min, d_max = float(kept.min()), float(kept.max())
    field = TdField(
        samples=samples,
        d_min=d_min,
        d_max=d_max,
        cutoff=cutoff(d_min, d_max, alpha),
        alpha=alpha,
    )
    return field, plan, plan.eval_count


def run(
    config: OptimizationConfig,
    on_iteration: Callable[[IterationContext], None] | None = None,
) -> OptimizationState:
    """Run the hard-kill loop until the volume target, stall, or iteration cap.

    History row k records the state solved at iteration k (before that
    iteration's removal), so the energy curve starts at (R, E/E0) = (1, 1).
    """
    mat = config.material
    alpha = config.cutoff_fraction
    grid, bc_assigner = build_problem(config)
    model = generate_boundary(grid, bc_assigner)

    history: list[IterationRecord] = []
    inverse_state: InverseState | None = None
    initial_energy: float | None = None
    termination = "max_iterations"
    k = 0

    def partial_state() -> OptimizationState:
        return OptimizationState(
            k=k,
            grid=grid,
            model=model,
            volume_fraction=grid.volume_fraction(),
            energy=history[-1].energy if history else float("nan"),
            initial_energy=initial_energy if initial_energy is not None else float("nan"),
            history=history,
            termination="failed",
            config=config,
        )

    while k < config.max_iterations:
        # --- solve the current boundary value problem
        t_assemble = t_solve = seed_seconds = 0.0
        try:
            if config.solver_mode == "lu" or k == 0:
                t0 = time.perf_counter()
                system = assemble(model, mat)
                t_assemble = time.perf_counter() - t0
                t0 = time.perf_counter()
                sol = solve(system)
                t_solve = time.perf_counter() - t0
                if config.solver_mode == "block" and k == 0:
                    # seeding the explicit inverse belongs to the update path
                    t0 = time.perf_counter()
                    inverse_state = InverseState.from_system(system)
                    seed_seconds = time.perf_counter() - t0
            else:
                t0 = time.perf_counter()
                rhs = rhs_vector(model, mat, inverse_state.element_order)
                system = inverse_state.as_system(model, mat, rhs)
                t_assemble = time.perf_counter() - t0
                t0 = time.perf_counter()
                sol = solve(system, inverse_state)
                t_solve = time.perf_counter() - t0
        except Exception as exc:
            raise OptimizationError(
                f"boundary value problem failed at iteration {k}: {exc}",
                partial_state(),
            ) from exc

        energy = strain_energy(sol, model)
        if initial_energy is None:
            initial_energy = energy
        volume = grid.volume_fraction()

        # --- sample the topological derivative
        t0 = time.perf_counter()
        try:
            if config.levels == 1:
                field, plan, evals = _sample_uniform(grid, sol, model, mat, alpha)
            else:
                field, plan, evals = _sample_quadtree(
                    grid, sol, model, mat, alpha, config.levels
                )
        except Exception as exc:
            raise OptimizationError(
                f"derivative sampling failed at iteration {k}: {exc}", partial_state()
            ) from exc
        t_td = time.perf_counter() - t0

        # --- classify and regenerate the boundary
        t0 = time.perf_counter()
        new_grid = classify_cells(grid, field)
        if np.array_equal(new_grid.status, grid.status):
            t_remesh = time.perf_counter() - t0
            history.append(
                IterationRecord(
                    k=k, volume_fraction=volume, energy=energy, n_s=model.n_s,
                    n_a=0, n_r=0, t_assemble=t_assemble, t_solve=t_solve,
                    t_td=t_td, t_remesh=t_remesh,
                    t_update=seed_seconds, t_audit=0.0, eval_count=evals,
                    drift=inverse_state.drift if inverse_state else 0.0,
                    grid_after=new_grid, model_after=model,
                )
            )
            k += 1
            termination = "stalled"
            break
        new_model = generate_boundary(new_grid, bc_assigner)
        diff = diff_boundaries(model, new_model)
        t_remesh = time.perf_counter() - t0

        # --- carry the inverse across the remesh
        t_update, t_audit = seed_seconds, 0.0
        if config.solver_mode == "block":
            timings: dict[str, float] = {}
            do_audit = (k + 1) % config.audit_stride == 0
            t0 = time.perf_counter()
            try:
                inverse_state = apply_diff(
                    inverse_state,
                    new_model,
                    mat,
                    diff,
                    refresh_threshold=config.refresh_threshold,
                    svd_rel_tol=config.svd_rel_tol,
                    audit=do_audit,
                    timings=timings,
                )
            except Exception as exc:
                raise OptimizationError(
                    f"inverse update failed at iteration {k}: {exc}", partial_state()
                ) from exc
            t_audit = timings.get("audit", 0.0)
            t_update += time.perf_counter() - t0 - t_audit

        if on_iteration is not None:
            on_iteration(
                IterationContext(
                    k=k, grid=grid, model=model, system=system, solution=sol,
                    field=field, new_grid=new_grid, new_model=new_model, diff=diff,
                    inverse_state=inverse_state, plan=plan,
                )
            )

        history.append(
            IterationRecord(
                k=k, volume_fraction=volume, energy=energy, n_s=model.n_s,
                n_a=diff.n_a, n_r=diff.n_r, t_assemble=t_assemble,
                t_solve=t_solve, t_td=t_td,
                t_remesh=t_remesh, t_update=t_update, t_audit=t_audit,
                eval_count=evals,
                drift=inverse_state.drift if inverse_state else 0.0,
                grid_after=new_grid, model_after=new_model,
            )
        )

        grid, model = new_grid, new_model
        k += 1
        if grid.volume_fraction() <= config.target_volume_fraction:
            termination = "target"
            break

    return OptimizationState(
        k=k,
        grid=grid,
        model=model,
        volume_fraction=grid.volume_fraction(),
        energy=history[-1].energy,
        initial_energy=initial_energy,
        history=history,
        termination=termination,
        config=config,
    )
