import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, settings, strategies as st

from conftest import CrossSectionTerm, SourceTerm, const, constant_source, param, slab_problem
from oracles import slab_function_values

from rte_rbm.fom import (DiffusionCorrection, SiConfig, SolverDivergence, Sweeper, build_system, solve, solve_direct,
                         solve_si, solve_si_dsa, transport_sweep)
from rte_rbm.problems import Discretization, get_problem


def slab_inflow(value):
    def g(points, v):
        return np.full(points.shape[0], value if v[0] > 0 else 0.0)
    return g


def pure_absorber(n_el, sigma=2.0):
    p = slab_problem(absorption=[CrossSectionTerm(const(sigma))], inflow=slab_inflow(1.0))
    return build_system(p, Discretization((n_el,), ("gl", 2)))


class TestSweep:
    def test_no_scattering_single_sweep_is_exact(self, homogeneous_small):
        mu = (0.0, 5.0)
        f = transport_sweep(homogeneous_small, mu, np.zeros(homogeneous_small.space.n_dof))
        ref = solve_direct(homogeneous_small, mu).f
        np.testing.assert_allclose(f.reshape(-1), ref, atol=1e-14 * np.abs(ref).max())

    def test_sweep_matches_per_direction_direct_solve(self, rng):
        s = build_system(get_problem("two-material-1d"), Discretization((16,), ("gl", 8)))
        mu = (93.0, 1.7)
        rho = rng.random(s.space.n_dof)
        f = transport_sweep(s, mu, rho).reshape(s.n_dirs, -1)
        op = s.operator
        from rte_rbm.dg import blocks_to_sparse
        sig_t = blocks_to_sparse(op.sigma_blocks(mu, "total"))
        sig_s = blocks_to_sparse(op.sigma_blocks(mu, "scattering"))
        b = s.data.vector(mu).reshape(s.n_dirs, -1)
        for j in range(s.n_dirs):
            lhs = (op.transport.matrix(j) + sig_t).tocsc()
            ref = spla.spsolve(lhs, sig_s @ rho + b[j])
            assert np.abs(f[j] - ref).max() <= 1e-12 * max(1.0, np.abs(ref).max())

    def test_2d_sweep_matches_direct(self, lattice_tiny, rng):
        s = lattice_tiny
        mu = (1.0, 10.0)
        rho = rng.random(s.space.n_dof)
        f = transport_sweep(s, mu, rho).reshape(s.n_dirs, -1)
        from rte_rbm.dg import blocks_to_sparse
        sig_t = blocks_to_sparse(s.operator.sigma_blocks(mu, "total"))
        sig_s = blocks_to_sparse(s.operator.sigma_blocks(mu, "scattering"))
        b = s.data.vector(mu).reshape(s.n_dirs, -1)
        for j in range(s.n_dirs):
            ref = spla.spsolve((s.operator.transport.matrix(j) + sig_t).tocsc(), sig_s @ rho + b[j])
            assert np.abs(f[j] - ref).max() <= 1e-12 * max(1.0, np.abs(ref).max())

    def test_singular_local_block_detected(self):
        p = slab_problem(sources=[SourceTerm(const(1.0), constant_source(1.0), ())])
        s = build_system(p, Discretization((4,), ("gl", 1)))  # single direction v = 0, no collisions
        with pytest.raises(np.linalg.LinAlgError):
            Sweeper(s)(s.operator.sigma_blocks((1.0, 1.0)), s.data.vector((1.0, 1.0)).reshape(1, -1))

    def test_manufactured_convergence_rate(self):
        errors = []
        for n in (8, 16, 32, 64):
            s = pure_absorber(n)
            f = solve_si(s, (1.0, 1.0)).f.reshape(s.n_dirs, -1)
            j = int(np.argmax(s.quad.nodes[:, 0]))
            v = s.quad.nodes[j, 0]
            pts, w, vals = slab_function_values(f[j], 0.0, 1.0, n, 1)
            errors.append(np.sqrt(np.sum(w * (vals - np.exp(-2.0 * pts / v)) ** 2)))
        rates = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        assert np.all(rates >= 1.8), rates


class TestSourceIteration:
    def test_no_scattering_converges_in_one_iteration(self, homogeneous_small):
        sol = solve_si(homogeneous_small, (0.0, 5.0))
        assert sol.iterations == 1
        sol = solve_si_dsa(homogeneous_small, (0.0, 5.0))
        assert sol.iterations == 1

    def test_si_matches_direct_homogeneous(self, homogeneous_full):
        mu = (1.0, 5.0)
        si = solve_si(homogeneous_full, mu, SiConfig(tol=1e-12))
        direct = solve_direct(homogeneous_full, mu)
        assert np.abs(si.f - direct.f).max() <= 1e-10 * np.abs(direct.f).max()

    def test_dsa_accelerates_scattering_dominated_slab(self):
        s = build_system(get_problem("homogeneous-1d"), Discretization((40,), ("gl", 8)))
        mu = (99.0, 1.0)
        plain = solve_si(s, mu, SiConfig(tol=1e-10))
        accel = solve_si_dsa(s, mu, SiConfig(tol=1e-10))
        assert accel.iterations < plain.iterations
        assert np.abs(plain.rho - accel.rho).max() <= 1e-8

    def test_dsa_matches_direct_two_material(self, two_material_quick):
        # change-based stopping leaves an error of about change / (1 - contraction), so the
        # cross-solver tolerance is used here; fixed-point agreement is checked below at 10 tol
        mu = (95.0, 1.5)
        accel = solve_si_dsa(two_material_quick, mu)
        direct = solve_direct(two_material_quick, mu)
        assert np.abs(accel.rho - direct.rho).max() <= 1e-10 * max(1.0, np.abs(direct.rho).max())

    def test_dsa_fixed_point_is_si_fixed_point(self, two_material_quick):
        """Plain SI started from the accelerated solution stays put within tolerance."""
        mu = (95.0, 1.5)
        accel = solve_si_dsa(two_material_quick, mu)
        plain = solve_si(two_material_quick, mu, SiConfig(initial_rho=accel.rho, max_iter=5))
        assert plain.iterations <= 2
        assert np.abs(plain.rho - accel.rho).max() <= 10 * 1e-12

    @pytest.mark.parametrize("name", ["homogeneous-1d", "two-material-1d"])
    def test_converged_residual_below_absolute_limit(self, name):
        problem = get_problem(name)
        s = build_system(problem, "paper")
        for mu in problem.test_set(5, 1):
            sol = solve_si_dsa(s, mu)
            assert s.residual_norm(mu, sol.f) <= 1e-8

    @pytest.mark.parametrize("name", ["homogeneous-1d", "two-material-1d"])
    def test_converged_residual_relative_bound(self, name):
        """Safety-factored bound 100 tol ||b||; the worst observed factor is printed."""
        problem = get_problem(name)
        s = build_system(problem, "paper")
        mus = np.vstack([problem.test_set(10, 1), [(1.7, 5.9)] if name == "homogeneous-1d" else np.empty((0, 2))])
        factors = []
        for mu in mus:
            sol = solve_si_dsa(s, mu)
            factors.append(s.residual_norm(mu, sol.f) / (1e-12 * s.norm(s.data.vector(mu))))
        print(f"{name}: worst residual factor {max(factors):.1f}")
        assert max(factors) <= 100

    def test_iteration_cap_reports_last_iterate(self):
        s = build_system(get_problem("homogeneous-1d"), Discretization((20,), ("gl", 4)))
        with pytest.raises(SolverDivergence) as info:
            solve_si(s, (99.0, 1.0), SiConfig(max_iter=3))
        assert info.value.solution.iterations == 3
        assert info.value.solution.f.shape == (s.size,)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SiConfig(tol=0.0)
        with pytest.raises(ValueError):
            SiConfig(max_iter=0)

    def test_dsa_rejects_vanishing_total_cross_section(self):
        s = build_system(get_problem("line-source-2d"), Discretization((4, 4), ("cl", 2, 1)))
        with pytest.raises(ValueError):
            DiffusionCorrection(s, (0.0,))

    def test_dsa_never_slower_on_benchmarks(self):
        """An iteration cap counts as the cap itself, so stagnating plain SI is not an error."""
        cap = 3000

        def count(solver, s, mu):
            try:
                return solver(s, mu, SiConfig(tol=1e-10, max_iter=cap)).iterations
            except SolverDivergence:
                return cap

        cases = (("homogeneous-1d", (1.5, 5.5)), ("two-material-1d", (95.0, 1.5)),
                 ("varying-scattering-1d", (95.0, 95.0)))
        for name, mu in cases:
            s = build_system(get_problem(name), Discretization((20,), ("gl", 8)))
            assert count(solve_si_dsa, s, mu) <= count(solve_si, s, mu)


class TestDirect:
    def test_zero_data_gives_zero(self):
        p = slab_problem(absorption=[CrossSectionTerm(const(1.0))])
        s = build_system(p, Discretization((5,), ("gl", 2)))
        assert not np.any(solve_direct(s, (1.0, 1.0)).f)

    def test_residual_small(self, homogeneous_full):
        mu = (1.2, 5.1)
        sol = solve_direct(homogeneous_full, mu)
        r = homogeneous_full.operator.apply(mu, sol.f) - homogeneous_full.data.vector(mu)
        assert np.linalg.norm(r) <= 1e-11 * np.linalg.norm(homogeneous_full.data.vector(mu))

    def test_full_size_solves_quickly(self, homogeneous_full):
        sol = solve_direct(homogeneous_full, (1.5, 5.5))
        assert sol.seconds < 1.0

    def test_dispatch(self, homogeneous_small):
        a = solve(homogeneous_small, (1.5, 5.5))
        b = solve(homogeneous_small, (1.5, 5.5), method="si-dsa")
        assert np.abs(a.f - b.f).max() <= 1e-10 * np.abs(a.f).max()
        with pytest.raises(ValueError):
            solve(homogeneous_small, (1.5, 5.5), method="gmres")


@settings(max_examples=10, deadline=None)
@given(st.floats(1.0, 2.0), st.floats(5.0, 6.0))
def test_scalar_flux_nonnegative(mu_s, mu_a):
    s = build_system(get_problem("homogeneous-1d"), Discretization((40,), ("gl", 8)))
    rho = solve_direct(s, (mu_s, mu_a)).rho.reshape(-1, 2)
    assert rho[:, 0].min() >= -1e-10


def test_scalar_flux_means_nonnegative_two_material(two_material_quick):
    rho = solve_direct(two_material_quick, (90.0, 1.0)).rho.reshape(-1, 2)
    assert rho[:, 0].min() >= -1e-10
