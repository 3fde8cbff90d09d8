"""Run artifacts: per-iteration SVG geometry, energy table, timing ledger.

All numeric output is deterministic for a fixed configuration; SVG
coordinates carry 9 significant digits.
"""
from __future__ import annotations

import csv
import json
import platform
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__ as _pkg_version
from .config import dump_config
from .model import BoundaryModel, CellGrid
from .optimize import OptimizationState

__all__ = ["RunArtifacts", "emit_artifacts", "boundary_svg", "chain_loops"]

_FMT = "{:.9g}"


@dataclass(frozen=True)
class RunArtifacts:
    """Paths of everything a run wrote."""

    outdir: Path
    manifest: Path
    config_echo: Path
    energy_table: Path
    timing_ledger: Path
    geometry: tuple[Path, ...]


def chain_loops(model: BoundaryModel) -> list[list[tuple[float, float]]]:
    """Chain oriented elements p0 -> p1 into closed vertex loops.

    Elements are oriented with material on the left, so following each
    element's end point to the next start point traces the loops; at
    degree-4 vertices the smallest-key candidate is taken, deterministically.
    """
    starts: dict[tuple[float, float], list[int]] = {}
    for pos, e in enumerate(model.elements):
        starts.setdefault(e.p0, []).append(pos)
    for lst in starts.values():
        lst.sort(key=lambda pos: model.elements[pos].face_key, reverse=True)

    used = [False] * model.n_s
    loops: list[list[tuple[float, float]]] = []
    for first in range(model.n_s):
        if used[first]:
            continue
        loop = [model.elements[first].p0]
        pos = first
        while True:
            used[pos] = True
            end = model.elements[pos].p1
            loop.append(end)
            if end == loop[0]:
                break
            candidates = [p for p in starts.get(end, []) if not used[p]]
            if not candidates:
                break  # open chain: only possible on malformed input
            pos = candidates.pop()
        loops.append(loop)
    return loops


def _svg_path(points: list[tuple[float, float]]) -> str:
    coords = " L ".join(
        f"{_FMT.format(x)} {_FMT.format(y)}" for x, y in points[:-1]
    )
    return f"M {coords} Z"


def boundary_svg(grid: CellGrid, model: BoundaryModel, title: str = "") -> str:
    """Standalone SVG of the material cells and boundary loops."""
    h = grid.cell_size
    x0, y0 = grid.origin
    w, hgt = grid.nx * h, grid.ny * h
    margin = 0.05 * max(w, hgt)
    # flip y so the grid's upward axis points up on screen
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{_FMT.format(x0 - margin)} '
        f'{_FMT.format(-(y0 + hgt + margin))} {_FMT.format(w + 2 * margin)} '
        f'{_FMT.format(hgt + 2 * margin)}">',
    ]
    if title:
        lines.append(f"<title>{title}</title>")
    lines.append('<g transform="scale(1,-1)">')

    cells = []
    rows, cols = np.nonzero(grid.status)
    for row, col in zip(rows.tolist(), cols.tolist()):
        cx = x0 + col * h
        cy = y0 + row * h
        cells.append(
            f'M {_FMT.format(cx)} {_FMT.format(cy)} h {_FMT.format(h)} '
            f'v {_FMT.format(h)} h {_FMT.format(-h)} Z'
        )
    lines.append(
        f'<path fill="#d5d9de" stroke="none" d="{" ".join(cells)}"/>'
    )

    protected = []
    rows, cols = np.nonzero(grid.protected)
    for row, col in zip(rows.tolist(), cols.tolist()):
        cx = x0 + col * h
        cy = y0 + row * h
        protected.append(
            f'M {_FMT.format(cx)} {_FMT.format(cy)} h {_FMT.format(h)} '
            f'v {_FMT.format(h)} h {_FMT.format(-h)} Z'
        )
    if protected:
        lines.append(f'<path fill="#aebfd4" stroke="none" d="{" ".join(protected)}"/>')

    loop_paths = " ".join(_svg_path(loop) for loop in chain_loops(model))
    stroke = 0.06 * h
    lines.append(
        f'<path fill="none" stroke="#1a1d21" stroke-width="{_FMT.format(stroke)}" '
        f'd="{loop_paths}"/>'
    )
    lines.append("</g></svg>")
    return "\n".join(lines) + "\n"


def _energy_rows(state: OptimizationState) -> list[list]:
    rows = []
    e0 = state.initial_energy
    for r in state.history:
        rows.append(
            [
                r.k,
                repr(r.volume_fraction),
                repr(r.energy),
                repr(r.energy / e0),
                r.n_s,
                r.n_a,
                r.n_r,
                repr(r.t_solve),
                repr(r.t_td),
                repr(r.t_remesh),
                repr(r.t_update),
            ]
        )
    return rows


def _timing_ledger(state: OptimizationState) -> dict:
    phases = ("assemble", "solve", "td", "remesh", "update", "audit")
    totals = {p: sum(getattr(r, "t_" + p) for r in state.history) for p in phases}
    return {
        "solver_mode": state.config.solver_mode,
        "iterations": state.k,
        "phase_totals_seconds": totals,
        "phase_notes": {
            "assemble": "full influence-matrix assembly (lu mode) or rhs columns (block mode)",
            "solve": "LU factor+solve (lu mode) or inverse apply with one refinement pass (block mode)",
            "update": "blockwise shrink/extend including the recomputed influence blocks",
            "audit": "inverse drift audits and refreshes, reported separately from update",
        },
        "per_iteration": [
            {
                "k": r.k,
                "n_s": r.n_s,
                "n_a": r.n_a,
                "n_r": r.n_r,
                **{("t_" + p): getattr(r, "t_" + p) for p in phases},
            }
            for r in state.history
        ],
    }


def emit_artifacts(
    state: OptimizationState,
    outdir: str | Path,
    extra_manifest: dict | None = None,
) -> RunArtifacts:
    """Write geometry snapshots, the energy table, timings and the manifest.

    One SVG per iteration (the boundary after that iteration's removal), a
    CSV energy table with one row per iteration, a JSON timing ledger and a
    manifest echoing the configuration in reloadable form.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    probe = outdir / ".write_probe"
    try:
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {outdir} is not writable: {exc}") from exc

    geometry: list[Path] = []
    width = max(4, len(str(len(state.history))))
    for r in state.history:
        path = outdir / f"boundary_{r.k + 1:0{width}d}.svg"
        path.write_text(
            boundary_svg(
                r.grid_after,
                r.model_after,
                title=f"iteration {r.k + 1}, volume fraction "
                f"{r.grid_after.volume_fraction():.6f}",
            )
        )
        geometry.append(path)

    energy_table = outdir / "energy.csv"
    with open(energy_table, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["k", "R", "E", "E_over_E0", "n_s", "n_a", "n_r",
             "t_solve", "t_td", "t_remesh", "t_update"]
        )
        writer.writerows(_energy_rows(state))

    timing_ledger = outdir / "timings.json"
    timing_ledger.write_text(json.dumps(_timing_ledger(state), indent=2) + "\n")

    config_echo = outdir / "config_echo.toml"
    config_echo.write_text(dump_config(state.config))

    manifest = outdir / "manifest.json"
    payload = {
        "package": {"name": "topobem", "version": _pkg_version},
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "termination": state.termination,
        "iterations": state.k,
        "final_volume_fraction": state.volume_fraction,
        "final_energy": state.energy,
        "initial_energy": state.initial_energy,
        "seed": state.config.seed,
        "files": {
            "config_echo": config_echo.name,
            "energy_table": energy_table.name,
            "timing_ledger": timing_ledger.name,
            "geometry": [p.name for p in geometry],
        },
    }
    if extra_manifest:
        payload.update(extra_manifest)
    manifest.write_text(json.dumps(payload, indent=2) + "\n")

    return RunArtifacts(
        outdir=outdir,
        manifest=manifest,
        config_echo=config_echo,
        energy_table=energy_table,
        timing_ledger=timing_ledger,
        geometry=tuple(geometry),
    )
