"""TOML run configuration: parsing, validation, defaults, round-trip dump.

Schema (everything optional except nothing; defaults in parentheses):

    [grid]
    nx = 20            # coarse cells in x (20)
    ny = 20            # coarse cells in y (20)
    cell_size = 1.0    # coarse cell edge length (1.0)
    levels = 1         # refinement levels; 2 doubles the grid once (1)

    [material]
    young_modulus = 1.0
    poisson_ratio = 0.3

    [optimization]
    cutoff_fraction = 0.003          # removal band above the field minimum
    target_volume_fraction = 0.5     # stop when R <= this
    max_iterations = 200
    solver = "block"                 # "block" | "lu"
    audit_stride = 1                 # audit the inverse every n-th update
    refresh_threshold = 1e-6         # drift above this refreshes the inverse
    svd_rel_tol = 1e-10              # truncation threshold of the Schur SVD

    [bc]
    clamped_edges = ["left"]

    [[bc.loads]]
    edge = "right"
    anchor = "max"                   # "min" | "max" | integer index
    force = [0.0, -1.0]              # resultant; applied as traction force/h
"""
from __future__ import annotations

import math
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .model import Material
from .optimize import LoadSpec, OptimizationConfig

__all__ = ["ConfigError", "load_config", "parse_config", "dump_config"]


class ConfigError(ValueError):
    """Malformed run configuration; the message names the offending key."""


_GRID_KEYS = {"nx", "ny", "cell_size", "levels"}
_MATERIAL_KEYS = {"young_modulus", "poisson_ratio"}
_OPT_KEYS = {
    "cutoff_fraction",
    "target_volume_fraction",
    "max_iterations",
    "solver",
    "audit_stride",
    "refresh_threshold",
    "svd_rel_tol",
    "seed",
}
_BC_KEYS = {"clamped_edges", "loads"}
_LOAD_KEYS = {"edge", "anchor", "force"}


def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in [{where}]")


def _get(section: dict, key: str, default, types, where: str):
    value = section.get(key, default)
    if not isinstance(value, types) or isinstance(value, bool):
        names = types.__name__ if isinstance(types, type) else "/".join(
            t.__name__ for t in types
        )
        raise ConfigError(f"{where}.{key} must be {names}, got {value!r}")
    return value


def parse_config(data: dict) -> OptimizationConfig:
    """Validate a parsed TOML mapping and build the run configuration."""
    _check_keys(data, {"grid", "material", "optimization", "bc"}, "<root>")
    grid = data.get("grid", {})
    material = data.get("material", {})
    opt = data.get("optimization", {})
    bc = data.get("bc", {})
    _check_keys(grid, _GRID_KEYS, "grid")
    _check_keys(material, _MATERIAL_KEYS, "material")
    _check_keys(opt, _OPT_KEYS, "optimization")
    _check_keys(bc, _BC_KEYS, "bc")

    nx = _get(grid, "nx", 20, int, "grid")
    ny = _get(grid, "ny", 20, int, "grid")
    cell_size = float(_get(grid, "cell_size", 1.0, (int, float), "grid"))
    levels = _get(grid, "levels", 1, int, "grid")

    young = float(_get(material, "young_modulus", 1.0, (int, float), "material"))
    poisson = float(_get(material, "poisson_ratio", 0.3, (int, float), "material"))

    alpha = float(_get(opt, "cutoff_fraction", 0.003, (int, float), "optimization"))
    target = float(
        _get(opt, "target_volume_fraction", 0.5, (int, float), "optimization")
    )
    max_iter = _get(opt, "max_iterations", 200, int, "optimization")
    solver = _get(opt, "solver", "block", str, "optimization")
    audit_stride = _get(opt, "audit_stride", 1, int, "optimization")
    refresh = float(_get(opt, "refresh_threshold", 1e-6, (int, float), "optimization"))
    svd_tol = float(_get(opt, "svd_rel_tol", 1e-10, (int, float), "optimization"))
    seed = opt.get("seed")
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool)):
        raise ConfigError(f"optimization.seed must be an integer, got {seed!r}")

    clamped = bc.get("clamped_edges", ["left"])
    if not isinstance(clamped, list) or not all(isinstance(e, str) for e in clamped):
        raise ConfigError("bc.clamped_edges must be a list of edge names")

    loads_raw = bc.get("loads", [{"edge": "right", "anchor": "max", "force": [0.0, -1.0]}])
    if not isinstance(loads_raw, list):
        raise ConfigError("bc.loads must be an array of tables")
    loads = []
    for i, entry in enumerate(loads_raw):
        if not isinstance(entry, dict):
            raise ConfigError(f"bc.loads[{i}] must be a table")
        _check_keys(entry, _LOAD_KEYS, f"bc.loads[{i}]")
        edge = _get(entry, "edge", "right", str, f"bc.loads[{i}]")
        anchor = entry.get("anchor", "max")
        if not isinstance(anchor, (str, int)) or isinstance(anchor, bool):
            raise ConfigError(f"bc.loads[{i}].anchor must be 'min', 'max' or an index")
        force = entry.get("force", [0.0, -1.0])
        if (
            not isinstance(force, list)
            or len(force) != 2
            or not all(isinstance(v, (int, float)) for v in force)
        ):
            raise ConfigError(f"bc.loads[{i}].force must be a 2-element number list")
        try:
            loads.append(LoadSpec(edge=edge, anchor=anchor, force=(float(force[0]), float(force[1]))))
        except ValueError as exc:
            raise ConfigError(f"bc.loads[{i}]: {exc}") from exc

    try:
        mat = Material(young_modulus=young, poisson_ratio=poisson)
        return OptimizationConfig(
            material=mat,
            nx=nx,
            ny=ny,
            cell_size=cell_size,
            levels=levels,
            cutoff_fraction=alpha,
            target_volume_fraction=target,
            max_iterations=max_iter,
            solver_mode=solver,
            clamped_edges=tuple(clamped),
            loads=tuple(loads),
            audit_stride=audit_stride,
            refresh_threshold=refresh,
            svd_rel_tol=svd_tol,
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> OptimizationConfig:
    """Read and validate a TOML run configuration file."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isinf(value) or math.isnan(value):
            raise ConfigError(f"cannot serialize {value}")
        return repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    raise ConfigError(f"cannot serialize {value!r}")


def dump_config(config: OptimizationConfig) -> str:
    """Serialize a configuration to TOML; load_config round-trips it."""
    lines = [
        "[grid]",
        f"nx = {_fmt(config.nx)}",
        f"ny = {_fmt(config.ny)}",
        f"cell_size = {_fmt(config.cell_size)}",
        f"levels = {_fmt(config.levels)}",
        "",
        "[material]",
        f"young_modulus = {_fmt(config.material.young_modulus)}",
        f"poisson_ratio = {_fmt(config.material.poisson_ratio)}",
        "",
        "[optimization]",
        f"cutoff_fraction = {_fmt(config.cutoff_fraction)}",
        f"target_volume_fraction = {_fmt(config.target_volume_fraction)}",
        f"max_iterations = {_fmt(config.max_iterations)}",
        f"solver = {_fmt(config.solver_mode)}",
        f"audit_stride = {_fmt(config.audit_stride)}",
        f"refresh_threshold = {_fmt(config.refresh_threshold)}",
        f"svd_rel_tol = {_fmt(config.svd_rel_tol)}",
    ]
    if config.seed is not None:
        lines.append(f"seed = {_fmt(config.seed)}")
    lines += [
        "",
        "[bc]",
        f"clamped_edges = {_fmt(list(config.clamped_edges))}",
    ]
    for load in config.loads:
        lines += [
            "",
            "[[bc.loads]]",
            f"edge = {_fmt(load.edge)}",
            f"anchor = {_fmt(load.anchor)}",
            f"force = {_fmt(list(load.force))}",
        ]
    return "\n".join(lines) + "\n"
