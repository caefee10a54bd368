"""Full-order solvers: transport sweeps, source iteration with optional
diffusion synthetic acceleration, and a sparse direct solve for small systems.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dg import (AffineOperator, AffineVector, DgSpace, WeightingMatrix, assemble_affine_cross_sections,
                 assemble_data)
from .mesh import SpatialMesh
from .problems import Discretization, ProblemDefinition
from .quadrature import AngularQuadrature, chebyshev_legendre_sphere, gauss_legendre, gauss_legendre_slab

__all__ = [
    "FomSystem",
    "SiConfig",
    "FomSolution",
    "SolverDivergence",
    "build_system",
    "transport_sweep",
    "solve_si",
    "solve_si_dsa",
    "solve_direct",
    "solve",
    "DiffusionCorrection",
    "prolongation",
]


class SolverDivergence(RuntimeError):
    """Source iteration hit the iteration cap; ``solution`` carries the last iterate."""

    def __init__(self, message, solution):
        super().__init__(message)
        self.solution = solution


@dataclass
class FomSystem:
    """Everything needed to evaluate and solve A_mu f = b_mu."""

    problem: ProblemDefinition
    space: DgSpace
    quad: AngularQuadrature
    operator: AffineOperator
    data: AffineVector
    weight: WeightingMatrix

    @property
    def size(self) -> int:
        return self.operator.size

    @property
    def n_dirs(self) -> int:
        return self.quad.n_dirs

    def scalar_flux(self, f: np.ndarray) -> np.ndarray:
        return self.quad.weights @ f.reshape(self.n_dirs, -1)

    def residual(self, mu, f) -> np.ndarray:
        return self.operator.apply(mu, f) - self.data.vector(mu)

    def residual_norm(self, mu, f) -> float:
        return float(np.linalg.norm(self.weight.apply_sqrt(self.residual(mu, f))))

    def norm(self, g) -> float:
        return float(np.linalg.norm(self.weight.apply_sqrt(g)))


def make_quadrature(spec: tuple) -> AngularQuadrature:
    if spec[0] == "gl":
        return gauss_legendre_slab(spec[1])
    if spec[0] == "cl":
        return chebyshev_legendre_sphere(spec[1], spec[2])
    raise ValueError(f"unknown quadrature spec {spec!r}")


def build_system(problem: ProblemDefinition, disc: Discretization | str = "paper") -> FomSystem:
    if isinstance(disc, str):
        disc = problem.discretization(disc)
    mesh = SpatialMesh(problem.lower, problem.upper, disc.shape)
    space = DgSpace(mesh, disc.degree)
    quad = make_quadrature(disc.quadrature)
    operator = assemble_affine_cross_sections(space, quad, problem)
    data = assemble_data(space, quad, problem)
    weight = WeightingMatrix.from_weights(np.asarray(quad.weights), space.n_dof)
    return FomSystem(problem, space, quad, operator, data, weight)


# --------------------------------------------------------------------------
# sweep kernel
# --------------------------------------------------------------------------

@numba.njit(cache=True)
def _sweep_kernel(orders, upwind, group, diag, coup, sig, rhs, out):
    n_dirs, n_el, nl = rhs.shape
    n_axes = upwind.shape[2]
    mat = np.empty((nl, nl))
    vec = np.empty(nl)
    for j in range(n_dirs):
        g = group[j]
        for idx in range(n_el):
            e = orders[g, idx]
            for a in range(nl):
                vec[a] = rhs[j, e, a]
                for b in range(nl):
                    mat[a, b] = diag[j, a, b] + sig[e, a, b]
            for ax in range(n_axes):
                u = upwind[g, e, ax]
                if u >= 0:
                    for a in range(nl):
                        s = 0.0
                        for b in range(nl):
                            s += coup[j, ax, a, b] * out[j, u, b]
                        vec[a] -= s
            # Gaussian elimination with partial pivoting on the local block
            for c in range(nl):
                p = c
                big = abs(mat[c, c])
                for r in range(c + 1, nl):
                    if abs(mat[r, c]) > big:
                        big = abs(mat[r, c])
                        p = r
                if big == 0.0:
                    return e
                if p != c:
                    for b in range(nl):
                        tmp = mat[c, b]
                        mat[c, b] = mat[p, b]
                        mat[p, b] = tmp
                    tmp = vec[c]
                    vec[c] = vec[p]
                    vec[p] = tmp
                for r in range(c + 1, nl):
                    fac = mat[r, c] / mat[c, c]
                    if fac != 0.0:
                        for b in range(c, nl):
                            mat[r, b] -= fac * mat[c, b]
                        vec[r] -= fac * vec[c]
            for c in range(nl - 1, -1, -1):
                s = vec[c]
                for b in range(c + 1, nl):
                    s -= mat[c, b] * out[j, e, b]
                out[j, e, c] = s / mat[c, c]
    return -1


class Sweeper:
    """Applies (D_j + Sigma_hat_t)^{-1} to a stack of per-direction right-hand sides."""

    def __init__(self, system: FomSystem):
        transport = system.operator.transport
        self.plan = transport.plan
        self.diag, self.coup = transport.sweep_blocks()
        self.n_dirs = system.n_dirs
        self.n_el = system.space.mesh.n_elements
        self.nl = system.space.n_local

    def __call__(self, sigma_t_blocks: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        rhs = np.ascontiguousarray(rhs.reshape(self.n_dirs, self.n_el, self.nl))
        out = np.zeros_like(rhs)
        bad = _sweep_kernel(self.plan.orders, self.plan.upwind, self.plan.group, self.diag, self.coup,
                            np.ascontiguousarray(sigma_t_blocks), rhs, out)
        if bad >= 0:
            raise np.linalg.LinAlgError(f"singular local block on element {bad} (check sigma_t > 0)")
        return out


def transport_sweep(system: FomSystem, mu, rho_prev: np.ndarray, sweeper: Optional[Sweeper] = None) -> np.ndarray:
    """One sweep: solve (D_j + Sigma_a + Sigma_s) f_j = Sigma_s rho_prev + b_j for all j."""
    sweeper = sweeper or Sweeper(system)
    op = system.operator
    sig_t = op.sigma_blocks(mu, "total")
    sig_s = op.sigma_blocks(mu, "scattering")
    n_el, nl = system.space.mesh.n_elements, system.space.n_local
    scatter = np.matmul(sig_s, rho_prev.reshape(n_el, nl, 1))[..., 0].reshape(-1)
    rhs = system.data.vector(mu).reshape(system.n_dirs, -1) + scatter[None, :]
    return sweeper(sig_t, rhs).reshape(-1)


# --------------------------------------------------------------------------
# diffusion synthetic acceleration
# --------------------------------------------------------------------------

def _hat_projection_1d(space: DgSpace, axis: int) -> np.ndarray:
    """Local (n_1d x 2) coefficients of the two element hat functions in the DG basis."""
    xi, w = gauss_legendre(space.n_1d + 2)
    vals, _ = space.basis_1d(axis, xi)
    h = space.mesh.widths[axis]
    hats = np.stack([(1 - xi) / 2, (1 + xi) / 2])
    return (vals * w * h / 2) @ hats.T


def prolongation(space: DgSpace) -> sp.csr_matrix:
    """E[k, i] = integral(phi_k psi_i): DG coefficients of each continuous Q1 nodal function."""
    mesh = space.mesh
    local_1d = [_hat_projection_1d(space, a) for a in range(mesh.dim)]
    local = local_1d[0]
    for m in local_1d[1:]:
        local = np.kron(local, m)
    idx = mesh.multi_index()
    node_shape = tuple(n + 1 for n in mesh.shape)
    corners = [np.array(c) for c in np.ndindex(*([2] * mesh.dim))]
    rows, cols, vals = [], [], []
    for c_i, corner in enumerate(corners):
        nodes = np.ravel_multi_index(tuple((idx + corner).T), node_shape)
        for k in range(space.n_local):
            rows.append(np.arange(mesh.n_elements) * space.n_local + k)
            cols.append(nodes)
            vals.append(np.full(mesh.n_elements, local[k, c_i]))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(space.n_dof, int(np.prod(node_shape))))


def _q1_element_matrices(widths):
    """Reference stiffness and mass for bilinear (or linear) elements of given widths."""
    stiff_1d = [np.array([[1.0, -1.0], [-1.0, 1.0]]) / h for h in widths]
    mass_1d = [np.array([[2.0, 1.0], [1.0, 2.0]]) * h / 6 for h in widths]
    if len(widths) == 1:
        return stiff_1d[0], mass_1d[0]
    stiff = np.kron(stiff_1d[0], mass_1d[1]) + np.kron(mass_1d[0], stiff_1d[1])
    return stiff, np.kron(mass_1d[0], mass_1d[1])


class DiffusionCorrection:
    """Continuous Q1 (P1 in 1D) solve of -div(D grad d) + sigma_a d = r, d = 0 on the boundary."""

    def __init__(self, system: FomSystem, mu):
        space = system.space
        mesh = space.mesh
        op = system.operator
        nl = space.n_local
        # orthonormal basis: the constant-mode entry of each block is the element mean
        sig_t = op.sigma_blocks(mu, "total")[:, 0, 0]
        sig_a = op.sigma_blocks(mu, "absorption")[:, 0, 0]
        if np.any(sig_t <= 0):
            raise ValueError("diffusion correction needs sigma_t > 0 on every element")
        coef = 1.0 / (3.0 * sig_t)
        stiff, mass = _q1_element_matrices(mesh.widths)
        idx = mesh.multi_index()
        node_shape = tuple(n + 1 for n in mesh.shape)
        corners = [np.array(c) for c in np.ndindex(*([2] * mesh.dim))]
        nodes = np.stack([np.ravel_multi_index(tuple((idx + c).T), node_shape) for c in corners], axis=1)
        local = coef[:, None, None] * stiff[None] + sig_a[:, None, None] * mass[None]
        rows = np.repeat(nodes, nodes.shape[1], axis=1).reshape(-1)
        cols = np.tile(nodes, (1, nodes.shape[1])).reshape(-1)
        n_nodes = int(np.prod(node_shape))
        mat = sp.csr_matrix((local.reshape(-1), (rows, cols)), shape=(n_nodes, n_nodes))
        grid = np.stack(np.unravel_index(np.arange(n_nodes), node_shape), axis=1)
        interior = np.all((grid > 0) & (grid < np.asarray(node_shape) - 1), axis=1)
        self.interior = np.flatnonzero(interior)
        self.lu = spla.splu(sp.csc_matrix(mat[self.interior][:, self.interior]))
        self.E = prolongation(space)[:, self.interior].tocsr()
        self.ET = sp.csr_matrix(self.E.T)
        self.sig_s = op.sigma_blocks(mu, "scattering")
        self.shape = (mesh.n_elements, nl, 1)

    def __call__(self, change: np.ndarray) -> np.ndarray:
        """DG coefficients of the correction driven by sigma_s * change."""
        load = self.ET @ np.matmul(self.sig_s, change.reshape(self.shape)).reshape(-1)
        return self.E @ self.lu.solve(load)


# --------------------------------------------------------------------------
# solvers
# --------------------------------------------------------------------------

@dataclass
class SiConfig:
    tol: float = 1e-12
    max_iter: int = 10000
    accelerate: bool = False
    initial_rho: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class FomSolution:
    f: np.ndarray
    rho: np.ndarray
    iterations: int
    change: float
    seconds: float = 0.0
    history: list = field(default_factory=list)


def _source_iteration(system: FomSystem, mu, cfg: SiConfig, accelerate: bool) -> FomSolution:
    start = time.perf_counter()
    sweeper = Sweeper(system)
    op = system.operator
    sig_t = op.sigma_blocks(mu, "total")
    sig_s = op.sigma_blocks(mu, "scattering")
    b = system.data.vector(mu).reshape(system.n_dirs, -1)
    n_el, nl = system.space.mesh.n_elements, system.space.n_local
    weights = system.quad.weights
    rho = np.zeros(system.space.n_dof) if cfg.initial_rho is None else np.array(cfg.initial_rho, dtype=float)
    scattering = bool(np.any(sig_s))
    dsa = DiffusionCorrection(system, mu) if accelerate and scattering else None
    history = []
    f = None
    for it in range(1, cfg.max_iter + 1):
        scatter = np.matmul(sig_s, rho.reshape(n_el, nl, 1))[..., 0].reshape(-1)
        f = sweeper(sig_t, b + scatter[None, :]).reshape(system.n_dirs, -1)
        rho_half = weights @ f
        rho_new = rho_half + dsa(rho_half - rho) if dsa is not None else rho_half
        change = float(np.max(np.abs(rho_new - rho)))
        history.append(change)
        rho = rho_new
        if not scattering:
            # without angular coupling one sweep is the exact solve; a second would reproduce it
            return FomSolution(f.reshape(-1), rho, it, 0.0, time.perf_counter() - start, history)
        if change < cfg.tol:
            return FomSolution(f.reshape(-1), rho, it, change, time.perf_counter() - start, history)
    sol = FomSolution(f.reshape(-1), rho, cfg.max_iter, history[-1], time.perf_counter() - start, history)
    raise SolverDivergence(f"source iteration did not converge in {cfg.max_iter} iterations", sol)


def solve_si(system: FomSystem, mu, cfg: Optional[SiConfig] = None) -> FomSolution:
    """Unaccelerated source iteration."""
    return _source_iteration(system, mu, cfg or SiConfig(), accelerate=False)


def solve_si_dsa(system: FomSystem, mu, cfg: Optional[SiConfig] = None) -> FomSolution:
    """Source iteration with a diffusion correction after every sweep."""
    return _source_iteration(system, mu, cfg or SiConfig(), accelerate=True)


def solve_direct(system: FomSystem, mu) -> FomSolution:
    """Sparse LU solve of the assembled full-order system."""
    start = time.perf_counter()
    mat = sp.csc_matrix(system.operator.sparse_matrix(mu))
    b = system.data.vector(mu)
    if not np.any(b):
        f = np.zeros_like(b)
    else:
        try:
            f = spla.splu(mat).solve(b)
        except RuntimeError as exc:  # SuperLU reports exact singularity this way
            raise np.linalg.LinAlgError(str(exc)) from exc
    return FomSolution(f, system.scalar_flux(f), 1, 0.0, time.perf_counter() - start)


def solve(system: FomSystem, mu, method: Optional[str] = None, tol: Optional[float] = None,
          initial_rho=None) -> FomSolution:
    """Dispatch to the problem's configured full-order solver."""
    method = method or system.problem.solver
    if method == "direct":
        return solve_direct(system, mu)
    cfg = SiConfig(tol=tol or system.problem.tol_si, initial_rho=initial_rho)
    if method == "si-dsa":
        return solve_si_dsa(system, mu, cfg)
    if method == "si":
        return solve_si(system, mu, cfg)
    raise ValueError(f"unknown solver {method!r}")
