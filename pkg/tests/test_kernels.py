"""Kernel verification against independent closed forms and exact fields."""
import numpy as np
import pytest

from topobem import Material, kelvin_kernels, strain_from_stress
from topobem.kernels import kelvin_displacement, kelvin_traction, stress_kernels


def textbook_displacement(dx, E, nu):
    """Independent transcription of the plane-strain point-force solution."""
    mu = E / (2.0 * (1.0 + nu))
    r = np.hypot(dx[0], dx[1])
    rd = np.asarray(dx) / r
    c = 1.0 / (8.0 * np.pi * mu * (1.0 - nu))
    out = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            out[i, j] = c * ((3.0 - 4.0 * nu) * np.log(1.0 / r) * (i == j)
                             + rd[i] * rd[j])
    return out


def square_boundary_quadrature(nseg=96, order=10):
    """Dense quadrature points, weights and outward normals of [0,1]^2."""
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    pts, wts, nrm = [], [], []
    edges = [
        ((0.0, 0.0), (1.0, 0.0), (0.0, -1.0)),
        ((1.0, 0.0), (1.0, 1.0), (1.0, 0.0)),
        ((1.0, 1.0), (0.0, 1.0), (0.0, 1.0)),
        ((0.0, 1.0), (0.0, 0.0), (-1.0, 0.0)),
    ]
    for a, b, n in edges:
        a, b, n = map(np.asarray, (a, b, n))
        for s in range(nseg):
            p0 = a + (b - a) * s / nseg
            p1 = a + (b - a) * (s + 1) / nseg
            for xi, wi in zip(x, w):
                pts.append(p0 + (p1 - p0) * xi)
                wts.append(wi / nseg)
                nrm.append(n)
    return np.array(pts), np.array(wts), np.array(nrm)


MAT = Material(1.0, 0.3)


class TestKelvinDisplacement:
    def test_value_against_independent_transcription(self):
        U, _ = kelvin_kernels((0.0, 0.0), (1.0, 0.0), (0.0, 1.0), MAT)
        ref = textbook_displacement((1.0, 0.0), 1.0, 0.3)
        assert np.allclose(U, ref, atol=1e-15)
        # r = (1, 0): ln term vanishes, only the rd dyad remains
        c = 1.0 / (8.0 * np.pi * MAT.shear_modulus * 0.7)
        assert U[0, 0] == pytest.approx(c)
        assert U[1, 1] == pytest.approx(0.0, abs=1e-16)

    def test_component_symmetry(self):
        rng = np.random.default_rng(3)
        dx = rng.normal(size=(40, 2))
        U = kelvin_displacement(dx, MAT)
        assert np.allclose(U, U.swapaxes(-1, -2))

    def test_argument_symmetry(self):
        src = np.array([0.3, -0.2])
        fld = np.array([1.1, 0.7])
        U1 = kelvin_displacement(fld - src, MAT)
        U2 = kelvin_displacement(src - fld, MAT)
        assert np.allclose(U1, U2)

    def test_coincident_points_error(self):
        with pytest.raises(ValueError, match="coincident"):
            kelvin_kernels((1.0, 1.0), (1.0, 1.0), (0.0, 1.0), MAT)


class TestRepresentationIdentities:
    """The kernels must reproduce exact elastic states through the boundary
    integral identities; this pins every sign and coefficient at once."""

    @pytest.mark.parametrize(
        "sigma",
        [
            np.array([[1.0, 0.0], [0.0, 0.0]]),
            np.array([[0.0, 0.0], [0.0, 1.0]]),
            np.array([[0.0, 1.0], [1.0, 0.0]]),
        ],
    )
    def test_uniform_state(self, sigma):
        eps = strain_from_stress(sigma, MAT)
        pts, wts, nrm = square_boundary_quadrature()
        u_b = pts @ eps.T
        t_b = nrm @ sigma.T
        for xi in (np.array([0.4, 0.55]), np.array([0.18, 0.77])):
            dx = pts - xi
            U = kelvin_displacement(dx, MAT)
            T = kelvin_traction(dx, nrm, MAT)
            u_rep = np.einsum("p,pij,pj->i", wts, U, t_b) - np.einsum(
                "p,pij,pj->i", wts, T, u_b
            )
            assert np.allclose(u_rep, eps @ xi, atol=1e-10)

            D, S = stress_kernels(dx, nrm, MAT)
            s_rep = np.einsum("p,pijk,pk->ij", wts, D, t_b) - np.einsum(
                "p,pijk,pk->ij", wts, S, u_b
            )
            assert np.allclose(s_rep, sigma, atol=1e-10)

    def test_point_force_field(self):
        src = np.array([2.5, -1.3])
        force = np.array([0.7, -1.1])
        pts, wts, nrm = square_boundary_quadrature()
        dxb = pts - src
        u_b = np.einsum("pij,i->pj", kelvin_displacement(dxb, MAT), force)
        t_b = np.einsum("pij,i->pj", kelvin_traction(dxb, nrm, MAT), force)
        for xi in (np.array([0.5, 0.5]), np.array([0.85, 0.15])):
            dx = pts - xi
            u_rep = np.einsum(
                "p,pij,pj->i", wts, kelvin_displacement(dx, MAT), t_b
            ) - np.einsum("p,pij,pj->i", wts, kelvin_traction(dx, nrm, MAT), u_b)
            u_exact = np.einsum("ij,i->j", kelvin_displacement(xi - src, MAT), force)
            assert np.allclose(u_rep, u_exact, atol=1e-10)

            D, S = stress_kernels(dx, nrm, MAT)
            s_rep = np.einsum("p,pijk,pk->ij", wts, D, t_b) - np.einsum(
                "p,pijk,pk->ij", wts, S, u_b
            )
            De, _ = stress_kernels((xi - src)[None, :], np.array([0.0, 1.0]), MAT)
            s_exact = -np.einsum("ijk,k->ij", De[0], force)
            assert np.allclose(s_rep, s_exact, atol=1e-10)

    def test_stress_kernel_symmetry(self):
        rng = np.random.default_rng(11)
        dx = rng.normal(size=(25, 2)) * 2.0
        n = rng.normal(size=(25, 2))
        n /= np.linalg.norm(n, axis=-1, keepdims=True)
        D, S = stress_kernels(dx, n, MAT)
        assert np.allclose(D, D.swapaxes(-3, -2))
        assert np.allclose(S, S.swapaxes(-3, -2))
