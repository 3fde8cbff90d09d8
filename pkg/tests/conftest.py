"""Shared problem builders for the test suite."""
from __future__ import annotations

import numpy as np
import pytest

from topobem import (
    CellGrid,
    Material,
    assemble,
    dirichlet,
    generate_boundary,
    neumann,
    solve,
    strain_from_stress,
    traction_free,
)
from topobem.model import FACE_EAST, FACE_WEST


def make_patch_problem(n=20, sigma=None, material=None):
    """Unit square under a uniform stress state with compatible BC data.

    Left edge: prescribed displacement of the exact linear field (a
    roller-like support: zero normal displacement, known tangential slip);
    right edge: the exact traction; top/bottom: traction-free only when the
    state has no vertical flux, otherwise exact tractions.
    """
    material = material or Material(1.0, 0.3)
    sigma = np.array([[1.0, 0.0], [0.0, 0.0]]) if sigma is None else np.asarray(sigma)
    eps = strain_from_stress(sigma, material)
    grid = CellGrid.full(n, n, cell_size=1.0 / n)

    def exact_u(points):
        return points @ eps.T

    def bc(key):
        cell, face = key
        col = cell % n
        if face == FACE_WEST and col == 0:
            return dirichlet(exact_u)
        if face == FACE_EAST and col == n - 1:
            return neumann(sigma @ np.array([1.0, 0.0]))
        # exact traction on the remaining faces (zero for uniaxial x)
        normal = {1: (0.0, 1.0), 3: (0.0, -1.0)}.get(face)
        if normal is not None:
            t = sigma @ np.asarray(normal)
            if np.any(t != 0.0):
                return neumann(t)
        return traction_free()

    model = generate_boundary(grid, bc)
    return grid, model, material, sigma, eps


@pytest.fixture(scope="session")
def patch_solution():
    grid, model, material, sigma, eps = make_patch_problem()
    system = assemble(model, material)
    sol = solve(system)
    return {
        "grid": grid,
        "model": model,
        "material": material,
        "sigma": sigma,
        "eps": eps,
        "system": system,
        "sol": sol,
    }


def loop_model(n_side=3, h=0.25, bc_kind="dirichlet"):
    """Closed square loop of 4*n_side elements with homogeneous BCs."""
    grid = CellGrid.full(n_side, n_side, cell_size=h)
    if bc_kind == "dirichlet":
        assigner = lambda key: dirichlet((0.0, 0.0))  # noqa: E731
    else:
        assigner = lambda key: traction_free()  # noqa: E731
    return generate_boundary(grid, assigner)
