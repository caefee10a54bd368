"""Upwind discontinuous Galerkin operators in affine parametric form.

The local basis on each element is the tensor product of L2-orthonormal
Legendre polynomials, so the spatial mass matrix is the identity. Global
vectors are ordered direction-major: entry ``(j, e, a)`` sits at
``j * n_dof + e * n_local + a``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .mesh import SpatialMesh, SweepPlan, build_sweep_orderings, direction_signs
from .problems import AffineCoefficient, ProblemDefinition
from .quadrature import AngularQuadrature, gauss_legendre, legendre_values

__all__ = [
    "DgSpace",
    "TransportOperator",
    "AffineOperator",
    "AffineVector",
    "WeightingMatrix",
    "assemble_transport",
    "assemble_affine_cross_sections",
    "assemble_data",
    "apply_A",
    "weighted_norm",
    "weighted_residual_norm",
]


def _kron_all(mats):
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


class DgSpace:
    """Piecewise Q^K space with an orthonormal tensor Legendre basis per element."""

    def __init__(self, mesh: SpatialMesh, degree: int = 1):
        if degree < 0:
            raise ValueError("degree must be nonnegative")
        self.mesh = mesh
        self.degree = degree
        self.n_1d = degree + 1
        self.n_local = self.n_1d ** mesh.dim
        self.n_dof = self.n_local * mesh.n_elements

    # one-dimensional building blocks, per axis -------------------------------
    def basis_1d(self, axis: int, xi) -> tuple:
        """Orthonormal basis values and x-derivatives at reference points xi in [-1, 1]."""
        h = self.mesh.widths[axis]
        p, dp = legendre_values(self.degree, xi)
        scale = np.sqrt((2 * np.arange(self.n_1d) + 1) / h)
        shape = (-1,) + (1,) * np.ndim(xi)
        return p * scale.reshape(shape), dp * (2.0 / h) * scale.reshape(shape)

    def traces_1d(self, axis: int) -> tuple:
        """Basis values at the left and right faces of an element."""
        vals, _ = self.basis_1d(axis, np.array([-1.0, 1.0]))
        return vals[:, 0].copy(), vals[:, 1].copy()

    def volume_1d(self, axis: int) -> np.ndarray:
        """V[k, l] = integral of phi_k' phi_l over one element."""
        xi, w = gauss_legendre(self.n_1d + 1)
        vals, ders = self.basis_1d(axis, xi)
        h = self.mesh.widths[axis]
        return (ders * w * (h / 2)) @ vals.T

    def lift(self, axis: int, mat: np.ndarray) -> np.ndarray:
        """Embed a 1D local matrix acting on ``axis`` into the tensor local space."""
        mats = [np.eye(self.n_1d)] * self.mesh.dim
        mats = list(mats)
        mats[axis] = mat
        return _kron_all(mats)

    # element quadrature ------------------------------------------------------
    def element_quadrature(self, n_points: int):
        """Tensor Gauss rule on every element.

        Returns physical points (n_el, n_q, dim), weights (n_q,) including the
        element Jacobian, and basis values (n_q, n_local).
        """
        xi, w = gauss_legendre(n_points)
        grids = np.meshgrid(*([xi] * self.mesh.dim), indexing="ij")
        ref = np.stack([g.reshape(-1) for g in grids], axis=1)
        wts = _kron_all([w] * self.mesh.dim) * self.mesh.element_volume / 2 ** self.mesh.dim
        widths = np.asarray(self.mesh.widths)
        corners = self.mesh.element_lower_corners()
        pts = corners[:, None, :] + (ref[None, :, :] + 1.0) * 0.5 * widths
        vals = self.basis_at_reference(ref)
        return pts, wts, vals

    def basis_at_reference(self, ref: np.ndarray) -> np.ndarray:
        """Local basis values at reference points (n, dim) -> (n, n_local)."""
        per_axis = [self.basis_1d(a, ref[:, a])[0] for a in range(self.mesh.dim)]
        out = per_axis[0].T
        for vals in per_axis[1:]:
            out = (out[:, :, None] * vals.T[:, None, :]).reshape(ref.shape[0], -1)
        return out

    def locate(self, points: np.ndarray) -> tuple:
        """Element index and reference coordinates of physical points."""
        points = np.atleast_2d(points)
        lower = np.asarray(self.mesh.lower)
        widths = np.asarray(self.mesh.widths)
        rel = (points - lower) / widths
        idx = np.clip(np.floor(rel).astype(int), 0, np.asarray(self.mesh.shape) - 1)
        ref = 2.0 * (rel - idx) - 1.0
        elem = np.ravel_multi_index(tuple(idx.T), self.mesh.shape)
        return elem, ref

    def evaluate(self, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Evaluate the DG function with coefficient vector ``coeffs`` (length n_dof)."""
        elem, ref = self.locate(points)
        vals = self.basis_at_reference(ref)
        local = np.asarray(coeffs).reshape(self.mesh.n_elements, self.n_local)[elem]
        return np.sum(vals * local, axis=1)

    def project(self, func, n_points: int | None = None) -> np.ndarray:
        """L2 projection of a callable f(points) -> values onto the space.

        The default rule has K + 2 Gauss points per axis.
        """
        pts, wts, vals = self.element_quadrature(n_points or self.n_1d + 1)
        fv = func(pts.reshape(-1, self.mesh.dim)).reshape(pts.shape[:2])
        return ((fv * wts) @ vals).reshape(-1)


# --------------------------------------------------------------------------
# transport
# --------------------------------------------------------------------------

@dataclass
class TransportOperator:
    """Block-diagonal streaming operator D = diag(D_1, ..., D_{N_v}).

    Stored as one sparse matrix per (axis, sign) for unit speed; direction j
    uses D_j = sum_axis |v_j,axis| * A[axis][sign_j,axis].
    """

    space: DgSpace
    speeds: np.ndarray  # (n_dirs, dim) absolute velocity components
    signs: np.ndarray  # (n_dirs, dim) +1/-1
    axis_matrices: list  # axis_matrices[axis][0 for +, 1 for -] sparse (n_dof, n_dof)
    local_diag: list  # local_diag[axis][sign index] (n_local, n_local)
    local_coupling: list  # local_coupling[axis][sign index]
    plan: SweepPlan

    @property
    def n_dirs(self) -> int:
        return self.speeds.shape[0]

    def matrix(self, j: int) -> sp.csr_matrix:
        mats = [self.speeds[j, a] * self.axis_matrices[a][0 if self.signs[j, a] > 0 else 1]
                for a in range(self.space.mesh.dim)]
        return sp.csr_matrix(sum(mats[1:], mats[0]))

    def matrix_full(self) -> sp.csr_matrix:
        return sp.block_diag([self.matrix(j) for j in range(self.n_dirs)], format="csr")

    @cached_property
    def _groups(self):
        out = []
        for g in range(self.plan.signs.shape[0]):
            idx = np.flatnonzero(self.plan.group == g)
            if idx.size:
                out.append((idx, self.plan.signs[g]))
        return out

    def sweep_blocks(self) -> tuple:
        """Per-direction local diagonal (n_dirs, nl, nl) and coupling (n_dirs, dim, nl, nl) blocks."""
        dim = self.space.mesh.dim
        nl = self.space.n_local
        diag = np.zeros((self.n_dirs, nl, nl))
        coup = np.zeros((self.n_dirs, dim, nl, nl))
        for a in range(dim):
            s_idx = np.where(self.signs[:, a] > 0, 0, 1)
            ld = np.stack(self.local_diag[a])[s_idx]
            lc = np.stack(self.local_coupling[a])[s_idx]
            diag += self.speeds[:, a, None, None] * ld
            coup[:, a] = self.speeds[:, a, None, None] * lc
        return diag, coup

    def apply(self, g: np.ndarray) -> np.ndarray:
        """D g for g of shape (n_dirs, n_dof, k)."""
        out = np.zeros_like(g)
        n_dirs, n_dof, k = g.shape
        for idx, signs in self._groups:
            block = np.ascontiguousarray(g[idx].transpose(1, 0, 2)).reshape(n_dof, -1)
            acc = np.zeros((n_dof, idx.size, k))
            for a, s in enumerate(signs):
                mat = self.axis_matrices[a][0 if s > 0 else 1]
                acc += (mat @ block).reshape(n_dof, idx.size, k) * self.speeds[idx, a][None, :, None]
            out[idx] = acc.transpose(1, 0, 2)
        return out


def _axis_operator(space: DgSpace, axis: int, sign: int):
    """Unit-speed local blocks for one axis and velocity sign."""
    t_left, t_right = space.traces_1d(axis)
    vol = space.volume_1d(axis)
    if sign > 0:
        diag = -vol + np.outer(t_right, t_right)
        coup = -np.outer(t_left, t_right)
    else:
        diag = vol + np.outer(t_left, t_left)
        coup = -np.outer(t_right, t_left)
    return space.lift(axis, diag), space.lift(axis, coup)


def assemble_transport(space: DgSpace, quad: AngularQuadrature) -> TransportOperator:
    """Assemble the upwind streaming blocks D_j for every direction of ``quad``."""
    mesh = space.mesh
    velocity = quad.spatial_velocity(mesh.dim)
    signs = direction_signs(velocity)
    speeds = np.abs(velocity)
    plan = build_sweep_orderings(mesh, quad)
    n_el = mesh.n_elements
    axis_matrices, local_diag, local_coupling = [], [], []
    for axis in range(mesh.dim):
        mats, diags, coups = [], [], []
        for sign in (1, -1):
            diag, coup = _axis_operator(space, axis, sign)
            up = mesh.neighbor(axis, -sign)
            rows = np.flatnonzero(up >= 0)
            shift = sp.csr_matrix((np.ones(rows.size), (rows, up[rows])), shape=(n_el, n_el))
            mat = sp.kron(sp.identity(n_el), diag) + sp.kron(shift, coup)
            mats.append(sp.csr_matrix(mat))
            diags.append(diag)
            coups.append(coup)
        axis_matrices.append(mats)
        local_diag.append(diags)
        local_coupling.append(coups)
    return TransportOperator(space, speeds, signs, axis_matrices, local_diag, local_coupling, plan)


# --------------------------------------------------------------------------
# cross sections and data
# --------------------------------------------------------------------------

def _aligned(mesh: SpatialMesh, box) -> bool:
    for a in range(mesh.dim):
        nodes = mesh.axis_nodes(a)
        tol = 1e-9 * mesh.widths[a]
        for edge in (box.lower[a], box.upper[a]):
            if edge <= mesh.lower[a] + tol or edge >= mesh.upper[a] - tol:
                continue
            if np.min(np.abs(nodes - edge)) > tol:
                return False
    return True


def element_indicator(mesh: SpatialMesh, boxes) -> np.ndarray:
    """1.0 on elements whose centre lies in the union of ``boxes`` (all elements if empty)."""
    if not boxes:
        return np.ones(mesh.n_elements)
    for box in boxes:
        if not _aligned(mesh, box):
            raise ValueError(f"material region {box} is not aligned with the mesh")
    centres = mesh.element_lower_corners() + 0.5 * np.asarray(mesh.widths)
    inside = np.zeros(mesh.n_elements, dtype=bool)
    for box in boxes:
        inside |= box.contains(centres)
    return inside.astype(float)


def mass_blocks(space: DgSpace, boxes=(), weight=None, n_points: int | None = None) -> np.ndarray:
    """Element blocks of integral(w * 1_region * phi_k phi_l), shape (n_el, nl, nl)."""
    ind = element_indicator(space.mesh, boxes)
    nl = space.n_local
    if weight is None:
        return ind[:, None, None] * np.eye(nl)[None]
    pts, wts, vals = space.element_quadrature(n_points or space.n_1d + 2)
    wv = weight(pts.reshape(-1, space.mesh.dim)).reshape(pts.shape[:2])
    blocks = np.einsum("eq,qa,qb->eab", wv * wts, vals, vals)
    return ind[:, None, None] * blocks


def blocks_to_sparse(blocks: np.ndarray) -> sp.bsr_matrix:
    n_el, nl, _ = blocks.shape
    return sp.bsr_matrix((blocks, np.arange(n_el), np.arange(n_el + 1)), shape=(n_el * nl, n_el * nl))


@dataclass
class AffineOperator:
    """A_mu = D + sum_q theta^s_q(mu) Sigma_s^q + sum_q theta^a_q(mu) Sigma_a^q.

    Term 0 is the transport operator; scattering terms follow, then absorption
    terms. Scattering acts as (I - 1 w^T) (x) Sigma_hat per direction and is
    never formed at full size.
    """

    transport: TransportOperator
    weights: np.ndarray
    scattering: list  # (AffineCoefficient, blocks)
    absorption: list

    @property
    def space(self) -> DgSpace:
        return self.transport.space

    @property
    def n_terms(self) -> int:
        return 1 + len(self.scattering) + len(self.absorption)

    @property
    def size(self) -> int:
        return self.weights.size * self.space.n_dof

    def thetas(self, mu) -> np.ndarray:
        vals = [1.0] + [c(mu) for c, _ in self.scattering] + [c(mu) for c, _ in self.absorption]
        return np.array(vals)

    def thetas_batch(self, mus) -> np.ndarray:
        mus = np.atleast_2d(mus)
        cols = [np.ones(mus.shape[0])] + [c.batch(mus) for c, _ in self.scattering] + [c.batch(mus) for c, _ in self.absorption]
        return np.stack(cols, axis=1)

    def _term_kind(self, q: int):
        if q == 0:
            return "transport", None
        q -= 1
        if q < len(self.scattering):
            return "scattering", self.scattering[q][1]
        return "absorption", self.absorption[q - len(self.scattering)][1]

    def _shape(self, g: np.ndarray):
        n_dirs, nl = self.weights.size, self.space.n_local
        vec = g.ndim == 1
        k = 1 if vec else g.shape[1]
        return vec, g.reshape(n_dirs, self.space.mesh.n_elements, nl, k)

    def apply_term(self, q: int, g: np.ndarray) -> np.ndarray:
        """Apply term q to g of shape (N,) or (N, k)."""
        if g.shape[0] != self.size:
            raise ValueError(f"vector length {g.shape[0]} does not match operator size {self.size}")
        kind, blocks = self._term_kind(q)
        vec, x = self._shape(g)
        if kind == "transport":
            out = self.transport.apply(x.reshape(x.shape[0], -1, x.shape[-1]))
        else:
            if kind == "scattering":
                x = x - np.tensordot(self.weights, x, axes=(0, 0))[None]
            out = np.matmul(blocks[None], x)
        out = out.reshape(self.size, -1)
        return out[:, 0] if vec else out

    def apply(self, mu, g: np.ndarray) -> np.ndarray:
        theta = self.thetas(mu)
        out = self.apply_term(0, g)
        for q in range(1, self.n_terms):
            if theta[q] != 0.0:
                out = out + theta[q] * self.apply_term(q, g)
        return out

    def sigma_blocks(self, mu, kind: str = "total") -> np.ndarray:
        """Element blocks of Sigma_hat_s, Sigma_hat_a or their sum at mu."""
        nl = self.space.n_local
        out = np.zeros((self.space.mesh.n_elements, nl, nl))
        if kind in ("total", "scattering"):
            for c, b in self.scattering:
                out += c(mu) * b
        if kind in ("total", "absorption"):
            for c, b in self.absorption:
                out += c(mu) * b
        return out

    # explicit assembly, for small problems only -----------------------------
    def sparse_term(self, q: int) -> sp.csr_matrix:
        kind, blocks = self._term_kind(q)
        n_dirs = self.weights.size
        if kind == "transport":
            return self.transport.matrix_full()
        hat = blocks_to_sparse(blocks)
        if kind == "absorption":
            return sp.csr_matrix(sp.kron(sp.identity(n_dirs), hat))
        coupling = np.eye(n_dirs) - np.outer(np.ones(n_dirs), self.weights)
        return sp.csr_matrix(sp.kron(sp.csr_matrix(coupling), hat))

    def sparse_matrix(self, mu) -> sp.csr_matrix:
        theta = self.thetas(mu)
        mats = [theta[q] * self.sparse_term(q) for q in range(self.n_terms)]
        return sp.csr_matrix(sum(mats[1:], mats[0]))


@dataclass
class AffineVector:
    """b_mu = sum_q theta^b_q(mu) b^q with terms stored as an (N, Q_b) array."""

    terms: np.ndarray
    coefficients: list

    @property
    def n_terms(self) -> int:
        return self.terms.shape[1]

    def thetas(self, mu) -> np.ndarray:
        return np.array([c(mu) for c in self.coefficients])

    def thetas_batch(self, mus) -> np.ndarray:
        mus = np.atleast_2d(mus)
        if not self.coefficients:
            return np.zeros((mus.shape[0], 0))
        return np.stack([c.batch(mus) for c in self.coefficients], axis=1)

    def vector(self, mu) -> np.ndarray:
        return self.terms @ self.thetas(mu)


@dataclass(frozen=True)
class WeightingMatrix:
    """Diagonal weight diag(w_j I) and its square root, valid for an orthonormal basis."""

    sqrt_diag: np.ndarray

    @classmethod
    def from_weights(cls, weights: np.ndarray, n_dof: int) -> "WeightingMatrix":
        if np.any(weights <= 0):
            raise ValueError("quadrature weights must be positive")
        return cls(np.repeat(np.sqrt(weights), n_dof))

    @property
    def diag(self) -> np.ndarray:
        return self.sqrt_diag**2

    def apply_sqrt(self, g: np.ndarray) -> np.ndarray:
        return g * self.sqrt_diag if g.ndim == 1 else g * self.sqrt_diag[:, None]


def assemble_affine_cross_sections(space: DgSpace, quad: AngularQuadrature, problem: ProblemDefinition) -> AffineOperator:
    transport = assemble_transport(space, quad)
    scattering = [(t.coefficient, mass_blocks(space, t.boxes, t.weight)) for t in problem.scattering]
    absorption = [(t.coefficient, mass_blocks(space, t.boxes, t.weight)) for t in problem.absorption]
    return AffineOperator(transport, np.asarray(quad.weights), scattering, absorption)


def _inflow_vector(space: DgSpace, quad: AngularQuadrature, inflow) -> np.ndarray:
    """-sum over inflow boundary faces of integral(g (v.n) phi_k), per direction."""
    mesh = space.mesh
    n_dirs = quad.n_dirs
    out = np.zeros((n_dirs, mesh.n_elements, space.n_local))
    velocity = quad.spatial_velocity(mesh.dim)
    idx = mesh.multi_index()
    corners = mesh.element_lower_corners()
    widths = np.asarray(mesh.widths)
    n_face = space.n_1d + 2
    xi, w = gauss_legendre(n_face)
    for axis in range(mesh.dim):
        t_left, t_right = space.traces_1d(axis)
        others = [a for a in range(mesh.dim) if a != axis]
        for side, normal in ((0, -1.0), (1, 1.0)):
            elems = np.flatnonzero(idx[:, axis] == (0 if side == 0 else mesh.shape[axis] - 1))
            trace = t_left if side == 0 else t_right
            # face quadrature points and per-point local basis values
            if others:
                o = others[0]
                face_w = w * widths[o] / 2
                tang, _ = space.basis_1d(o, xi)  # (n_1d, n_face)
                if axis == 0:
                    local = np.einsum("a,bq->qab", trace, tang).reshape(n_face, -1)
                else:
                    local = np.einsum("aq,b->qab", tang, trace).reshape(n_face, -1)
                pts = np.repeat(corners[elems][:, None, :], n_face, axis=1)
                pts[:, :, o] += (xi + 1.0) * 0.5 * widths[o]
                pts[:, :, axis] = mesh.lower[axis] if side == 0 else mesh.upper[axis]
            else:
                face_w = np.ones(1)
                local = trace[None, :]
                pts = np.full((elems.size, 1, 1), mesh.lower[axis] if side == 0 else mesh.upper[axis])
            flat_pts = pts.reshape(-1, mesh.dim)
            for j in range(n_dirs):
                vn = velocity[j, axis] * normal
                if vn >= 0.0:
                    continue
                gv = inflow(flat_pts, quad.nodes[j]).reshape(elems.size, -1)
                out[j, elems] += -vn * (gv * face_w) @ local
    return out.reshape(-1)


def assemble_data(space: DgSpace, quad: AngularQuadrature, problem: ProblemDefinition) -> AffineVector:
    """Affine data family; source and inflow share one unit-coefficient term when both exist."""
    n_dirs = quad.n_dirs
    terms, coefs = [], []
    for src in problem.sources:
        ind = element_indicator(space.mesh, src.boxes)
        local = space.project(src.function) * np.repeat(ind, space.n_local)
        terms.append(np.tile(local, n_dirs))
        coefs.append(src.coefficient)
    if problem.inflow is not None:
        vec = _inflow_vector(space, quad, problem.inflow)
        unit = [i for i, c in enumerate(coefs) if c == AffineCoefficient(1.0, ())]
        if unit:
            terms[unit[0]] = terms[unit[0]] + vec
        else:
            terms.append(vec)
            coefs.append(AffineCoefficient(1.0, ()))
    if not terms:
        terms.append(np.zeros(n_dirs * space.n_dof))
        coefs.append(AffineCoefficient(1.0, ()))
    return AffineVector(np.stack(terms, axis=1), coefs)


def apply_A(family: AffineOperator, mu, g: np.ndarray) -> np.ndarray:
    return family.apply(mu, g)


def weighted_norm(weight: WeightingMatrix, g: np.ndarray) -> float:
    return float(np.linalg.norm(weight.apply_sqrt(g)))


def weighted_residual_norm(family: AffineOperator, data: AffineVector, weight: WeightingMatrix, mu, g) -> float:
    return weighted_norm(weight, family.apply(mu, g) - data.vector(mu))
