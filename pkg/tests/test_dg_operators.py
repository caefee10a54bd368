import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import Polynomial

from oracles import orthonormal_basis, slab_function_values, slab_transport, slab_weighted_mass
from conftest import CrossSectionTerm, Box, const, param, slab_problem

from rte_rbm.dg import (DgSpace, WeightingMatrix, apply_A, assemble_affine_cross_sections, assemble_data,
                        assemble_transport, weighted_norm, weighted_residual_norm)
from rte_rbm.fom import build_system, solve_direct
from rte_rbm.mesh import SpatialMesh
from rte_rbm.problems import Discretization, get_problem
from rte_rbm.quadrature import AngularQuadrature, chebyshev_legendre_sphere, gauss_legendre_slab


def slab_quadrature(v):
    return AngularQuadrature(1, np.array([[float(v)]]), np.array([1.0]))


class TestTransport:
    def test_single_constant_element(self):
        space = DgSpace(SpatialMesh((0.0,), (1.0,), (1,)), degree=0)
        D = assemble_transport(space, slab_quadrature(1.0)).matrix(0).toarray()
        np.testing.assert_allclose(D, [[1.0]], atol=1e-15)

    def test_two_linear_elements_against_polynomial_oracle(self):
        space = DgSpace(SpatialMesh((0.0,), (1.0,), (2,)), degree=1)
        D = assemble_transport(space, slab_quadrature(1.0)).matrix(0).toarray()
        ref = slab_transport(0.0, 1.0, 2, 1, 1.0)
        np.testing.assert_allclose(D, ref, atol=1e-13)
        assert np.all(D[:2, 2:] == 0)  # block lower triangular in sweep order

    @pytest.mark.parametrize("v", [0.3, -0.7, 1.0, -1.0])
    @pytest.mark.parametrize("degree", [0, 1, 2])
    def test_slab_matrices_match_oracle(self, v, degree):
        space = DgSpace(SpatialMesh((-1.0,), (2.0,), (5,)), degree=degree)
        D = assemble_transport(space, slab_quadrature(v)).matrix(0).toarray()
        np.testing.assert_allclose(D, slab_transport(-1.0, 2.0, 5, degree, v), atol=1e-12)

    def test_2d_streaming_of_bilinear_function(self):
        """A continuous Q1 function vanishing on the inflow boundary streams to v . grad f exactly."""
        mesh = SpatialMesh((0.0, -1.0), (2.0, 1.0), (4, 3))
        space = DgSpace(mesh, 1)
        quad = chebyshev_legendre_sphere(8, 2)
        op = assemble_transport(space, quad)
        v = quad.spatial_velocity(2)
        for j in range(quad.n_dirs):
            x0 = 0.0 if v[j, 0] >= 0 else 2.0
            y0 = -1.0 if v[j, 1] >= 0 else 1.0
            f = space.project(lambda p: (p[:, 0] - x0) * (p[:, 1] - y0))
            grad = space.project(lambda p: v[j, 0] * (p[:, 1] - y0) + v[j, 1] * (p[:, 0] - x0))
            np.testing.assert_allclose(op.matrix(j) @ f, grad, atol=1e-12)

    def test_dissipativity_random_vectors(self, rng):
        mesh = SpatialMesh((0.0, 0.0), (1.0, 1.0), (5, 4))
        space = DgSpace(mesh, 1)
        quad = chebyshev_legendre_sphere(4, 2)
        op = assemble_transport(space, quad)
        for j in range(quad.n_dirs):
            D = op.matrix(j).toarray()
            G = rng.standard_normal((space.n_dof, 200))
            assert np.min(np.einsum("ik,ij,jk->k", G, D, G)) >= -1e-12
            assert np.linalg.eigvalsh(D + D.T).min() >= -1e-12

    def test_matrix_free_apply_matches_matrices(self, rng):
        space = DgSpace(SpatialMesh((0.0, 0.0), (1.0, 1.0), (3, 4)), 1)
        quad = chebyshev_legendre_sphere(4, 2)
        op = assemble_transport(space, quad)
        g = rng.standard_normal((quad.n_dirs, space.n_dof, 3))
        out = op.apply(g)
        for j in range(quad.n_dirs):
            np.testing.assert_allclose(out[j], op.matrix(j) @ g[j], atol=1e-12)


class TestSpace:
    def test_orthonormal_local_basis(self):
        space = DgSpace(SpatialMesh((0.0, 0.0), (2.0, 1.0), (2, 3)), 2)
        _, w, vals = space.element_quadrature(5)
        np.testing.assert_allclose((vals * w[:, None]).T @ vals, np.eye(space.n_local), atol=1e-13)

    def test_dof_count(self):
        space = DgSpace(SpatialMesh((0.0, 0.0), (1.0, 1.0), (3, 5)), 1)
        assert space.n_dof == 4 * 15

    def test_projection_reproduces_bilinear_functions(self, rng):
        space = DgSpace(SpatialMesh((0.0, 0.0), (1.0, 1.0), (3, 2)), 1)
        f = lambda p: 1.5 - 2 * p[:, 0] + 0.5 * p[:, 1] + 3 * p[:, 0] * p[:, 1]  # noqa: E731
        c = space.project(f)
        pts = rng.random((50, 2))
        np.testing.assert_allclose(space.evaluate(c, pts), f(pts), atol=1e-13)


class TestCrossSections:
    def test_homogeneous_absorption_is_identity(self):
        sys_ = build_system(get_problem("homogeneous-1d"), Discretization((10,), ("gl", 2)))
        coef, blocks = sys_.operator.absorption[0]
        np.testing.assert_allclose(blocks, np.broadcast_to(np.eye(2), blocks.shape), atol=1e-14)
        assert coef((1.3, 5.7)) == 5.7

    def test_two_material_scattering_support(self):
        sys_ = build_system(get_problem("two-material-1d"), Discretization((40,), ("gl", 2)))
        _, blocks = sys_.operator.scattering[0]
        h = 4.0 / 40
        centers = (np.arange(40) + 0.5) * h
        assert np.all(blocks[centers < 1.0] == 0)
        assert np.all(np.abs(np.diagonal(blocks[centers > 1.0], axis1=1, axis2=2) - 1) < 1e-14)

    def test_term_counts(self):
        counts = {}
        for name in ("homogeneous-1d", "two-material-1d", "varying-scattering-1d", "lattice-2d",
                     "line-source-2d", "pin-cell-2d"):
            p = get_problem(name)
            disc = Discretization((7, 7), ("cl", 2, 1)) if p.dim_x == 2 else Discretization((8,), ("gl", 2))
            if name == "pin-cell-2d":
                disc = Discretization((4, 4), ("cl", 2, 1))
            if name == "line-source-2d":
                disc = Discretization((4, 4), ("cl", 2, 1))
            s = build_system(p, disc)
            counts[name] = (s.operator.n_terms, s.data.n_terms)
        assert counts["pin-cell-2d"] == (4, 1)
        assert counts["line-source-2d"] == (2, 1)
        for name in ("homogeneous-1d", "two-material-1d", "varying-scattering-1d", "lattice-2d"):
            assert counts[name] == (3, 1)

    def test_misaligned_region_rejected(self):
        p = slab_problem(absorption=[CrossSectionTerm(const(1.0), (Box((0.0,), (0.33,)),))])
        with pytest.raises(ValueError):
            build_system(p, Discretization((4,), ("gl", 2)))

    def test_blocks_symmetric_psd(self):
        s = build_system(get_problem("varying-scattering-1d"), Discretization((12,), ("gl", 2)))
        for _, blocks in s.operator.scattering + s.operator.absorption:
            np.testing.assert_allclose(blocks, blocks.transpose(0, 2, 1), atol=1e-15)
            assert np.linalg.eigvalsh(blocks).min() >= -1e-14


def dense_oracle_operator(problem, n_el, nv):
    """Independent dense A_mu builder for slab problems with the terms used in the registry."""
    quad = gauss_legendre_slab(nv)
    lo, up = problem.lower[0], problem.upper[0]
    D = [slab_transport(lo, up, n_el, 1, v) for v in quad.nodes[:, 0]]

    def mass(term):
        w = Polynomial([0.0, 1.0]) if term.weight is not None else Polynomial([1.0])
        sup = (term.boxes[0].lower[0], term.boxes[0].upper[0]) if term.boxes else None
        return slab_weighted_mass(lo, up, n_el, 1, w, sup)

    scat = [(t.coefficient, mass(t)) for t in problem.scattering]
    absn = [(t.coefficient, mass(t)) for t in problem.absorption]
    w = quad.weights
    P = np.eye(nv) - np.outer(np.ones(nv), w)

    def A(mu):
        out = np.kron(np.eye(nv), np.zeros_like(D[0]))
        for j in range(nv):
            n = D[j].shape[0]
            out[j * n:(j + 1) * n, j * n:(j + 1) * n] += D[j]
        for c, M in scat:
            out += c(mu) * np.kron(P, M)
        for c, M in absn:
            out += c(mu) * np.kron(np.eye(nv), M)
        return out

    return A


@pytest.mark.parametrize("name", ["homogeneous-1d", "two-material-1d", "varying-scattering-1d"])
def test_affine_apply_matches_dense_assembly(name, rng):
    problem = get_problem(name)
    n_el = 20
    s = build_system(problem, Discretization((n_el,), ("gl", 6)))
    A = dense_oracle_operator(problem, n_el, 6)
    lo, up = np.asarray(problem.param_lower), np.asarray(problem.param_upper)
    for _ in range(50):
        mu = lo + (up - lo) * rng.random(lo.size)
        g = rng.standard_normal(s.size)
        ref = A(mu) @ g
        out = apply_A(s.operator, mu, g)
        assert np.linalg.norm(out - ref) <= 1e-13 * np.linalg.norm(ref)
        assert np.linalg.norm(s.operator.sparse_matrix(mu) @ g - ref) <= 1e-13 * np.linalg.norm(ref)


def test_apply_without_cross_sections_is_transport(homogeneous_small, rng):
    g = rng.standard_normal(homogeneous_small.size)
    np.testing.assert_allclose(apply_A(homogeneous_small.operator, (0.0, 0.0), g),
                               homogeneous_small.operator.apply_term(0, g), atol=1e-15)


def test_scattering_annihilates_isotropic_vectors(homogeneous_small, rng):
    op = homogeneous_small.operator
    g = np.tile(rng.standard_normal(homogeneous_small.space.n_dof), homogeneous_small.n_dirs)
    assert np.abs(op.apply_term(1, g)).max() <= 1e-14 * np.abs(g).max()


def test_apply_rejects_wrong_length(homogeneous_small):
    with pytest.raises(ValueError):
        apply_A(homogeneous_small.operator, (1.0, 5.0), np.ones(homogeneous_small.size + 1))


class TestData:
    def test_zero_data(self):
        p = slab_problem(absorption=[CrossSectionTerm(const(1.0))])
        s = build_system(p, Discretization((5,), ("gl", 2)))
        assert not np.any(s.data.vector((1.0, 1.0)))

    def test_two_material_inflow(self):
        p = get_problem("two-material-1d")
        n_el, nv = 40, 4
        s = build_system(p, Discretization((n_el,), ("gl", nv)))
        b = s.data.vector((95.0, 1.5)).reshape(nv, n_el, 2)
        phi = orthonormal_basis(0.0, 0.1, 1)
        for j, v in enumerate(s.quad.nodes[:, 0]):
            if v > 0:
                np.testing.assert_allclose(b[j, 0], [5 * v * phi[0](0.0), 5 * v * phi[1](0.0)], rtol=1e-13)
                assert not np.any(b[j, 1:])
            else:
                assert not np.any(b[j])

    def test_line_source_against_gauss_oracle(self):
        p = get_problem("line-source-2d")
        s = build_system(p, Discretization((80, 80), ("cl", 2, 1)))
        n = 80
        h = 1.0 / n
        xi, w = np.polynomial.legendre.leggauss(3)  # K + 2 points per axis
        b = s.data.terms[: s.space.n_dof, 0].reshape(n, n, 2, 2)
        rng = np.random.default_rng(0)
        for ix, iy in rng.integers(0, n, size=(40, 2)):
            ax, ay = ix * h, iy * h
            px = orthonormal_basis(ax, ax + h, 1)
            py = orthonormal_basis(ay, ay + h, 1)
            X = ax + (xi + 1) * h / 2
            Y = ay + (xi + 1) * h / 2
            G = np.exp(-100 * ((X[:, None] - 0.5) ** 2 + (Y[None, :] - 0.5) ** 2))
            W = np.outer(w, w) * h * h / 4
            scale = np.abs(b[ix, iy]).max()
            for a in range(2):
                for c in range(2):
                    ref = np.sum(W * G * px[a](X)[:, None] * py[c](Y)[None, :])
                    assert abs(b[ix, iy, a, c] - ref) <= 1e-12 * scale
        # quadrature error sits far below the O(h^2) discretization error at this resolution
        pts, wts, vals = s.space.element_quadrature(12)
        G = np.exp(-100 * ((pts[..., 0] - 0.5) ** 2 + (pts[..., 1] - 0.5) ** 2))
        fine = ((G * wts) @ vals).reshape(-1)
        assert np.abs(b.reshape(-1) - fine).max() <= 1e-6 * np.abs(fine).max()


class TestWeightedNorm:
    def test_constant_vector(self, homogeneous_small):
        g = np.ones(homogeneous_small.size)
        assert abs(weighted_norm(homogeneous_small.weight, g) - np.sqrt(homogeneous_small.space.n_dof)) < 1e-12

    def test_factor_squares_to_weight(self, homogeneous_small):
        w = homogeneous_small.weight
        np.testing.assert_array_equal(w.sqrt_diag * w.sqrt_diag, w.diag)
        assert np.all(w.sqrt_diag > 0)

    def test_residual_of_solution_vanishes(self, homogeneous_small):
        mu = (1.4, 5.3)
        f = solve_direct(homogeneous_small, mu).f
        r = weighted_residual_norm(homogeneous_small.operator, homogeneous_small.data, homogeneous_small.weight, mu, f)
        assert r <= 1e-11 * homogeneous_small.norm(homogeneous_small.data.vector(mu))

    def test_matches_function_space_norm(self, homogeneous_small, rng):
        s = homogeneous_small
        n_el = s.space.mesh.n_elements
        for _ in range(20):
            g = rng.standard_normal(s.size).reshape(s.n_dirs, -1)
            total = 0.0
            for j in range(s.n_dirs):
                _, w, vals = slab_function_values(g[j], 0.0, 4.0, n_el, 1)
                total += s.quad.weights[j] * np.sum(w * vals**2)
            assert abs(weighted_norm(s.weight, g.reshape(-1)) - np.sqrt(total)) <= 1e-12 * np.sqrt(total)

    def test_residual_norm_basis_independent(self, homogeneous_small, rng):
        """Residual norm from a nodal (non-orthonormal) basis equals the orthonormal one."""
        s = homogeneous_small
        mu = (1.2, 5.5)
        n_el, nv = s.space.mesh.n_elements, s.n_dirs
        h = 4.0 / n_el
        # nodal Lagrange basis at the element end points, written in the orthonormal basis
        phi = orthonormal_basis(0.0, h, 1)
        V = np.array([[phi[k](x) for x in (0.0, h)] for k in range(2)])  # V[k, i] = phi_k(x_i)
        T_local = np.linalg.inv(V.T)  # columns: coefficients of the nodal functions
        T = np.kron(np.eye(nv * n_el), T_local)
        A = s.operator.sparse_matrix(mu).toarray()
        b = s.data.vector(mu)
        A_nodal, b_nodal = T.T @ A @ T, T.T @ b
        M_nodal = np.kron(np.eye(n_el), T_local.T @ T_local)
        for _ in range(5):
            c = rng.standard_normal(s.size)
            r = (A_nodal @ c - b_nodal).reshape(nv, -1)
            nodal = np.sqrt(sum(s.quad.weights[j] * r[j] @ np.linalg.solve(M_nodal, r[j]) for j in range(nv)))
            ortho = s.residual_norm(mu, T @ c)
            assert abs(nodal - ortho) <= 1e-11 * ortho


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 50.0), st.floats(0.0, 50.0), st.integers(0, 2**31 - 1))
def test_isotropic_null_space_property(mu_s, mu_a, seed):
    p = get_problem("homogeneous-1d")
    s = build_system(p, Discretization((6,), ("gl", 4)))
    rng = np.random.default_rng(seed)
    iso = np.tile(rng.standard_normal(s.space.n_dof), s.n_dirs)
    out = s.operator.apply((mu_s, mu_a), iso)
    ref = s.operator.apply((0.0, mu_a), iso)
    assert np.abs(out - ref).max() <= 1e-12 * (1 + np.abs(ref).max())
