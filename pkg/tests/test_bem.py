import numpy as np
import pytest
from scipy.integrate import quad

from topobem import (
    CellGrid,
    Material,
    assemble,
    dirichlet,
    generate_boundary,
    interior_fields,
    interior_state,
    neumann,
    solve,
    strain_energy,
    strain_from_stress,
    traction_free,
)
from topobem.bem import (
    BemError,
    DistanceViolationError,
    SingularSystemError,
    _collocation_rows,
    _to_matrix,
    influence_blocks,
    rhs_vector,
    system_blocks,
)
from topobem.inverse_update import InverseState
from topobem.kernels import kelvin_displacement, kelvin_traction
from topobem.model import COLLOCATION_PARAMS
from topobem.quadrature import shape_functions

from conftest import loop_model, make_patch_problem

MAT = Material(1.0, 0.3)


class TestAssembly:
    def test_dof_count_single_cell(self):
        model = loop_model(n_side=1)
        # 4-element unit square, all Dirichlet
        assert model.n_s == 4
        system = assemble(model, MAT)
        assert system.n == 24
        assert system.matrix.shape == (24, 24)

    def test_dof_count_12_element_loop(self):
        model = loop_model(n_side=3)
        assert model.n_s == 12
        system = assemble(model, MAT)
        assert system.n == 72

    def test_dof_map_blocks_of_six(self):
        model = loop_model(n_side=2)
        system = assemble(model, MAT)
        starts = sorted(system.dof_map.values())
        assert starts == list(range(0, system.n, 6))

    def test_empty_model_rejected(self):
        with pytest.raises(ValueError):
            generate_boundary(CellGrid.full(1, 1).with_status(np.zeros((1, 1))), None)

    def test_rigid_body_row_sums(self):
        """A rigid translation produces zero tractions: every row of the
        jump-included traction operator must annihilate constant modes."""
        model = loop_model(n_side=3)
        pts, elem, node = _collocation_rows(model)
        H, _ = influence_blocks(model, MAT, pts, elem, node)
        Hm = _to_matrix(H)
        for direction in range(2):
            rigid = np.zeros(6 * model.n_s)
            rigid[direction::2] = 1.0
            assert np.abs(Hm @ rigid).max() < 1e-12

    def test_self_blocks_match_adaptive_quadrature(self):
        """Closed-form singular self-integrals vs scipy adaptive oracle."""
        model = loop_model(n_side=2, h=0.37)
        pos = 3
        e = model.elements[pos]
        pts = model.collocation[pos]
        elem = np.full(3, pos)
        node = np.arange(3)
        H, G = influence_blocks(model, MAT, pts, elem, node, np.array([pos]))

        p0 = np.asarray(e.p0)
        dvec = np.asarray(e.p1) - p0
        L = e.length
        normal = np.asarray(e.normal)

        for a, za in enumerate(COLLOCATION_PARAMS):
            src = p0 + za * dvec
            for b in range(3):
                for i in range(2):
                    for j in range(2):
                        def gph(z, i=i, j=j, b=b):
                            if z == za:
                                return 0.0  # measure-zero endpoint probe
                            x = p0 + z * dvec
                            U = kelvin_displacement(x - src, MAT)
                            return U[i, j] * shape_functions(np.array([z]))[0, b] * L

                        want = (
                            quad(gph, 0, za, points=[za], limit=200)[0]
                            + quad(gph, za, 1, points=[za], limit=200)[0]
                        )
                        assert G[a, 0, i, b, j] == pytest.approx(want, abs=1e-9)

                        # traction kernel: smooth part time phi_b over 1/(z-za)
                        def tph(z, i=i, j=j, b=b):
                            if z == za:
                                return 0.0  # regular limit; exact hit only
                            x = p0 + z * dvec
                            T = kelvin_traction(x - src, normal, MAT)
                            phi = shape_functions(np.array([z]))[0, b]
                            return T[i, j] * phi * L * (z - za)

                        want_cpv = quad(
                            tph, 0, 1, weight="cauchy", wvar=za, limit=200
                        )[0]
                        got = H[a, 0, i, b, j]
                        if b == a and i == j:
                            got = got - 0.5  # remove the jump term
                        assert got == pytest.approx(want_cpv, abs=1e-9)

    def test_self_block_diagonal_dominance(self):
        """The jump-bearing self block dominates every other block of its row."""
        model = loop_model(n_side=3, h=0.2)
        pts, elem, node = _collocation_rows(model)
        H, _ = influence_blocks(model, MAT, pts, elem, node)
        for p in range(len(pts)):
            e_self = elem[p]
            blocks = np.linalg.norm(H[p, :, :, :, :].reshape(model.n_s, 2, 6), axis=(1, 2))
            self_block = np.linalg.norm(H[p, e_self, :, node[p], :])
            others = np.delete(blocks, e_self)
            assert self_block >= others.max()

    def test_system_blocks_match_full_assembly(self):
        grid, model, material, *_ = make_patch_problem(n=4)
        system = assemble(model, material)
        keys = model.keys()
        rows, cols = keys[3:7], keys[5:11]
        sub = system_blocks(model, material, rows, cols)
        ri = np.concatenate([np.arange(system.dof_map[k], system.dof_map[k] + 6) for k in rows])
        ci = np.concatenate([np.arange(system.dof_map[k], system.dof_map[k] + 6) for k in cols])
        assert np.array_equal(sub, system.matrix[np.ix_(ri, ci)])

    def test_rhs_vector_matches_full_assembly(self):
        grid, model, material, *_ = make_patch_problem(n=4)
        system = assemble(model, material)
        assert np.allclose(rhs_vector(model, material), system.rhs, atol=1e-15)


class TestSolve:
    def test_patch_interior_stress(self, patch_solution):
        d = patch_solution
        grid, model = d["grid"], d["model"]
        centers = np.array([grid.cell_center(i) for i in range(grid.n_cells)])
        _, sigma, eps = interior_fields(centers, d["sol"], model, d["material"])
        assert np.abs(sigma - d["sigma"]).max() < 0.01
        assert np.abs(eps - d["eps"]).max() < 0.01

    def test_zero_rhs_zero_solution(self):
        model = loop_model(n_side=2, bc_kind="dirichlet")
        system = assemble(model, MAT)
        assert np.allclose(system.rhs, 0.0)
        sol = solve(system)
        assert np.allclose(sol.t, 0.0) and np.allclose(sol.u, 0.0)

    def test_neumann_scaling_linearity(self):
        def build(lam):
            grid, model, material, *_ = make_patch_problem(n=5, sigma=np.diag([lam, 0.0]))
            return solve(assemble(model, material))

        s1, s2 = build(1.0), build(3.0)
        assert np.allclose(s2.u, 3.0 * s1.u, rtol=1e-9, atol=1e-14)
        assert np.allclose(s2.t, 3.0 * s1.t, rtol=1e-9, atol=1e-14)

    def test_inverse_path_matches_lu(self, patch_solution):
        system = patch_solution["system"]
        state = InverseState.from_system(system)
        sol_lu = solve(system)
        sol_inv = solve(system, state)
        scale = np.abs(sol_lu.u).max()
        assert np.abs(sol_inv.u - sol_lu.u).max() / scale < 1e-8
        assert np.abs(sol_inv.t - sol_lu.t).max() / max(1e-30, np.abs(sol_lu.t).max()) < 1e-8

    def test_inverse_size_mismatch(self):
        small = assemble(loop_model(1), MAT)
        big = assemble(loop_model(2), MAT)
        state = InverseState.from_system(small)
        with pytest.raises(BemError, match="size"):
            solve(big, state)

    def test_singular_without_dirichlet_raises(self):
        model = loop_model(n_side=2, bc_kind="neumann")  # free floating
        system = assemble(model, MAT)
        with pytest.raises(SingularSystemError):
            solve(system)

    def test_regularized_pure_neumann_patch(self):
        """Self-equilibrated tractions, no supports: least-squares solve
        still reproduces the interior stress state."""
        n = 10
        grid = CellGrid.full(n, n, cell_size=1.0 / n)
        sigma = np.array([[1.0, 0.0], [0.0, 0.0]])

        def bc(key):
            cell, face = key
            col = cell % n
            if face == 0 and col == n - 1:
                return neumann((1.0, 0.0))
            if face == 2 and col == 0:
                return neumann((-1.0, 0.0))
            return traction_free()

        model = generate_boundary(grid, bc)
        sol = solve(assemble(model, MAT), regularize=True)
        centers = np.array([grid.cell_center(i) for i in range(grid.n_cells)])
        _, s_int, _ = interior_fields(centers, sol, model, MAT)
        assert np.abs(s_int - sigma).max() < 0.01


class TestInteriorFields:
    def test_distance_guard(self, patch_solution):
        d = patch_solution
        close = np.array([[0.5, 1e-4]])  # hugging the bottom edge
        with pytest.raises(DistanceViolationError):
            interior_fields(close, d["sol"], d["model"], d["material"])

    def test_interior_state_single_point(self, patch_solution):
        d = patch_solution
        st = interior_state(np.array([0.5, 0.5]), d["sol"], d["model"], d["material"])
        assert np.allclose(st.sigma, d["sigma"], atol=1e-4)
        assert np.allclose(st.sigma, st.sigma.T)
        assert np.allclose(st.epsilon, strain_from_stress(st.sigma, d["material"]))

    def test_zero_load_zero_fields(self):
        model = loop_model(n_side=3, h=1.0 / 3.0, bc_kind="dirichlet")
        sol = solve(assemble(model, MAT))
        pts = np.array([[0.5, 0.5], [0.31, 0.62]])
        u, sigma, eps = interior_fields(pts, sol, model, MAT)
        assert np.abs(u).max() < 1e-14
        assert np.abs(sigma).max() < 1e-14

    def test_continuity_between_nearby_points(self, patch_solution):
        """Smooth solution: nearby interior values differ by O(step)."""
        d = patch_solution
        p = np.array([0.412, 0.533])
        step = 1e-4
        pts = np.array([p, p + [step, 0.0]])
        u, sigma, _ = interior_fields(pts, d["sol"], d["model"], d["material"])
        assert np.abs(u[1] - u[0]).max() < 10.0 * step
        assert np.abs(sigma[1] - sigma[0]).max() < 10.0 * step

    def test_stress_consistent_with_displacement_gradient(self):
        """Kernel stress vs central finite differences of the represented
        displacement field: an independent check of the stress kernels on a
        genuinely non-uniform solution."""
        grid, model, material, *_ = make_patch_problem(n=8)
        # corner load makes the field non-uniform
        def bc(key):
            cell, face = key
            col, row = cell % 8, cell // 8
            if face == 2 and col == 0:
                return dirichlet((0.0, 0.0))
            if face == 0 and col == 7 and row == 7:
                return neumann((0.0, -8.0))
            return traction_free()

        model = generate_boundary(grid, bc)
        sol = solve(assemble(model, material))
        p = np.array([0.55, 0.45])
        h = 2e-5
        stencil = np.array(
            [p, p + [h, 0], p - [h, 0], p + [0, h], p - [0, h]]
        )
        u, sigma, _ = interior_fields(stencil, sol, model, material)
        grad = np.empty((2, 2))
        grad[:, 0] = (u[1] - u[2]) / (2 * h)  # du/dx
        grad[:, 1] = (u[3] - u[4]) / (2 * h)  # du/dy
        eps_fd = 0.5 * (grad + grad.T)
        lam, mu = material.lame_lambda, material.shear_modulus
        sigma_fd = lam * np.trace(eps_fd) * np.eye(2) + 2 * mu * eps_fd
        assert np.abs(sigma_fd - sigma[0]).max() < 1e-4 * max(1.0, np.abs(sigma[0]).max())


class TestStrainEnergy:
    def test_zero_load(self):
        model = loop_model(n_side=2, bc_kind="dirichlet")
        sol = solve(assemble(model, MAT))
        assert strain_energy(sol, model) == pytest.approx(0.0, abs=1e-20)

    def test_quadratic_scaling(self):
        def energy(lam):
            grid, model, material, *_ = make_patch_problem(n=5, sigma=np.diag([lam, 0.0]))
            sol = solve(assemble(model, material))
            return strain_energy(sol, model)

        e1, e3 = energy(1.0), energy(3.0)
        assert e3 == pytest.approx(9.0 * e1, rel=1e-9)

    def test_boundary_work_equals_volume_energy(self, patch_solution):
        """For the uniform state, boundary work must equal the volume
        integral 1/2 sigma:eps * area (independent energy oracle)."""
        d = patch_solution
        e_volume = 0.5 * np.einsum("ij,ij->", d["sigma"], d["eps"]) * 1.0
        e_boundary = strain_energy(d["sol"], d["model"])
        assert e_boundary == pytest.approx(e_volume, rel=1e-10)
