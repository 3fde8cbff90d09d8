"""Command line entry point: run an optimization or an LU-vs-block benchmark.

    topobem run <config.toml> --out <dir> [--solver lu|block] [--levels L]
                [--max-iter N] [--benchmark] [--seed S]
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from .artifacts import emit_artifacts
from .config import ConfigError, load_config
from .optimize import OptimizationConfig, OptimizationError, OptimizationState, run

__all__ = ["main", "benchmark_mode"]


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topobem",
        description="Hard-kill topology optimization with a 2D plane-strain "
        "boundary-element solver.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an optimization from a TOML config")
    p_run.add_argument("config", type=Path, help="TOML configuration file")
    p_run.add_argument("--out", type=Path, required=True, help="output directory")
    p_run.add_argument(
        "--solver", choices=("lu", "block"), default=None,
        help="override the configured solver mode",
    )
    p_run.add_argument(
        "--levels", type=int, default=None, help="override refinement levels"
    )
    p_run.add_argument(
        "--max-iter", type=int, default=None, help="override the iteration cap"
    )
    p_run.add_argument(
        "--benchmark", action="store_true",
        help="run both solver modes and emit a timing comparison",
    )
    p_run.add_argument(
        "--seed", type=int, default=None,
        help="recorded in the manifest; the pipeline itself is deterministic",
    )
    return parser


def _apply_overrides(config: OptimizationConfig, args) -> OptimizationConfig:
    fields = {}
    if args.solver is not None:
        fields["solver_mode"] = args.solver
    if args.levels is not None:
        fields["levels"] = args.levels
    if args.max_iter is not None:
        fields["max_iterations"] = args.max_iter
    if args.seed is not None:
        fields["seed"] = args.seed
    return dataclasses.replace(config, **fields) if fields else config


def _check_outdir(outdir: Path) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    probe = outdir / ".write_probe"
    try:
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {outdir} is not writable: {exc}") from exc


def _print_summary(state: OptimizationState) -> None:
    print(
        f"[{state.config.solver_mode}] {state.k} iterations, "
        f"R = {state.volume_fraction:.4f}, "
        f"E/E0 = {state.energy / state.initial_energy:.4f}, "
        f"terminated: {state.termination}"
    )


def benchmark_mode(config: OptimizationConfig, outdir: Path) -> dict:
    """Run both solver modes on identical inputs and compare.

    Emits both runs' artifacts under lu/ and block/, plus benchmark.json
    with per-iteration and total timings and the topology-equality verdict.
    The blockwise side counts incremental-update work (influence blocks of
    changed element pairs plus the Schur algebra); the refactorization side
    counts the full assembly plus LU factor/solve it performs each
    iteration.  Drift audits are reported separately.
    """
    results: dict[str, OptimizationState] = {}
    walls: dict[str, float] = {}
    for mode in ("lu", "block"):
        cfg = dataclasses.replace(config, solver_mode=mode)
        t0 = time.perf_counter()
        state = run(cfg)
        walls[mode] = time.perf_counter() - t0
        results[mode] = state
        emit_artifacts(state, outdir / mode)
        _print_summary(state)

    lu, bk = results["lu"], results["block"]
    identical = lu.k == bk.k and np.array_equal(lu.grid.status, bk.grid.status)
    lu_refactor = sum(r.t_assemble + r.t_solve for r in lu.history)
    lu_factor_only = sum(r.t_solve for r in lu.history)
    bk_update = sum(r.t_update for r in bk.history)
    bk_apply = sum(r.t_solve + r.t_assemble for r in bk.history)
    comparison = {
        "iterations": {"lu": lu.k, "block": bk.k},
        "topology_identical": bool(identical),
        "final_volume_fraction": {"lu": lu.volume_fraction, "block": bk.volume_fraction},
        "wall_seconds": walls,
        "cumulative_seconds": {
            "lu_refactorization_total": lu_refactor,
            "lu_factor_solve_only": lu_factor_only,
            "block_update_total": bk_update,
            "block_rhs_and_apply": bk_apply,
            "block_audit_total": sum(r.t_audit for r in bk.history),
        },
        "update_vs_refactorization_ratio": bk_update / lu_refactor if lu_refactor else None,
        "per_iteration": [
            {
                "k": a.k,
                "n_a": b.n_a,
                "n_r": b.n_r,
                "lu_assemble_factor": a.t_assemble + a.t_solve,
                "block_update": b.t_update,
            }
            for a, b in zip(lu.history, bk.history)
        ],
    }
    (outdir / "benchmark.json").write_text(json.dumps(comparison, indent=2) + "\n")
    verdict = "identical" if identical else "DIFFERENT"
    print(
        f"benchmark: topologies {verdict}; block update {bk_update:.2f}s vs "
        f"lu refactorization {lu_refactor:.2f}s "
        f"(ratio {comparison['update_vs_refactorization_ratio']:.3f})"
    )
    return comparison


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = load_config(args.config)
        config = _apply_overrides(config, args)
        _check_outdir(args.out)
        if args.benchmark:
            benchmark_mode(config, args.out)
        else:
            try:
                state = run(config)
            except OptimizationError as exc:
                if exc.state is not None and exc.state.history:
                    emit_artifacts(
                        exc.state, args.out, extra_manifest={"error": str(exc)}
                    )
                    print(
                        f"error: {exc}; partial artifacts written to {args.out}",
                        file=sys.stderr,
                    )
                else:
                    print(f"error: {exc}", file=sys.stderr)
                return 1
            emit_artifacts(state, args.out)
            _print_summary(state)
            print(f"artifacts written to {args.out}")
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
