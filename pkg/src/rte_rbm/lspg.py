"""Least-squares Petrov-Galerkin reduced model.

Offline, the weighted affine blocks and data vectors are stacked into one
tall matrix B and factored once by column-pivoted QR. Because
Q^T B = R P^T, the projected blocks and the residual matrix are slices of
the same small s x Q_B array, and the tall orthogonal factor is never
needed in the default mode.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .linalg import pivoted_qr
from .projection import ProjectedTerms, ThetaMap

__all__ = [
    "MODES",
    "RankDeficientError",
    "LspgArtifacts",
    "lspg_offline",
    "lspg_online",
    "lspg_online_batch",
    "lspg_condition_batch",
    "residual_norm_alg5",
    "residual_norm_alg5_batch",
    "residual_norm_variant1",
    "residual_norm_variant1_batch",
    "residual_norm_variant2",
    "residual_norm_direct",
    "normal_equation_solve",
]

MODES = ("standard", "prime")


class RankDeficientError(np.linalg.LinAlgError):
    pass


@dataclass
class LspgArtifacts:
    mode: str
    Y: np.ndarray  # (Q_A, s, m)
    b_tilde: np.ndarray  # (Q_b, s)
    G_res: Optional[np.ndarray]  # (s, Q_B) in standard mode
    gram_b: Optional[np.ndarray]  # (Q_b, Q_b) in prime mode
    rank: int
    thetas: ThetaMap
    Q: Optional[np.ndarray] = None  # offline only, kept on request

    @property
    def m(self) -> int:
        if self.Y is not None:
            return self.Y.shape[2]
        # residual-only artifacts: G_res columns are n_a blocks of m plus the data columns
        return (self.G_res.shape[1] - self.thetas.n_b) // self.thetas.n_a

    @property
    def n_columns(self) -> int:
        return self.thetas.n_a * self.m + (self.thetas.n_b if self.mode == "standard" else 0)

    def drop_offline(self) -> "LspgArtifacts":
        return LspgArtifacts(self.mode, self.Y, self.b_tilde, self.G_res, self.gram_b, self.rank, self.thetas)


def stacked_matrix(terms: ProjectedTerms, with_data: bool = True) -> np.ndarray:
    """B = [G T_1 U, ..., G T_QA U, G b^1, ..., G b^Qb] in Fortran order."""
    terms.update()
    m = terms.m
    n_a = terms.n_terms
    n_b = terms.data_terms.shape[1] if with_data else 0
    w = terms.weight_sqrt[:, None]
    B = np.empty((terms.system.size, n_a * m + n_b), order="F")
    for q in range(n_a):
        np.multiply(w, terms.TU(q), out=B[:, q * m : (q + 1) * m])
    if n_b:
        np.multiply(w, terms.data_terms, out=B[:, n_a * m :])
    return B


def lspg_offline(terms: ProjectedTerms, mode: str = "standard", rank_tol: float = 1e-13,
                 keep_q: bool = False) -> LspgArtifacts:
    """Pivoted-QR offline stage; ``prime`` leaves the data vectors out of B."""
    if mode not in MODES:
        raise ValueError(f"unknown LSPG mode {mode!r}")
    standard = mode == "standard"
    B = stacked_matrix(terms, with_data=standard)
    m = terms.m
    n_a = terms.n_terms
    if B.shape[0] < B.shape[1]:
        raise ValueError("full dimension must be at least the number of stacked columns")
    bbar = None if standard else terms.weight_sqrt[:, None] * terms.data_terms
    qr = pivoted_qr(B, rank_tol=rank_tol, keep_q=keep_q or not standard, overwrite=True)
    del B
    if qr.rank < m:
        raise RankDeficientError(f"pivoted QR rank {qr.rank} is below the reduced dimension {m}")
    G = qr.times_perm_transpose()
    Y = np.stack([G[:, q * m : (q + 1) * m] for q in range(n_a)])
    if standard:
        b_tilde = G[:, n_a * m :].T.copy()
        gram = None
        G_res = G
    else:
        b_tilde = (qr.Q.T @ bbar).T
        gram = bbar.T @ bbar
        G_res = None
    return LspgArtifacts(mode, Y, b_tilde, G_res, gram, qr.rank, terms.thetas, qr.Q if keep_q else None)


def _solve_reduced(Y: np.ndarray, rhs: np.ndarray):
    Qm, Rm = np.linalg.qr(Y)  # Householder (LAPACK geqrf)
    diag = np.abs(np.diag(Rm))
    if diag.min() <= 1e-14 * diag.max():
        raise RankDeficientError("projected LSPG matrix is rank deficient")
    d = Qm.T @ rhs
    return sla.solve_triangular(Rm, d, check_finite=False), d


def lspg_online(art: LspgArtifacts, mu, return_d: bool = False):
    """Coefficients minimizing the weighted residual at mu (sizes s x m only)."""
    Y = np.tensordot(art.thetas.a(mu), art.Y, axes=1)
    rhs = art.thetas.b(mu) @ art.b_tilde
    c, d = _solve_reduced(Y, rhs)
    return (c, d) if return_d else c


def lspg_online_batch(art: LspgArtifacts, mus):
    """Stacked version of :func:`lspg_online`; returns (c, d) arrays of shape (n_mu, m)."""
    Y = np.einsum("nq,qsm->nsm", art.thetas.a_batch(mus), art.Y)
    rhs = art.thetas.b_batch(mus) @ art.b_tilde
    Qm, Rm = np.linalg.qr(Y)
    diag = np.abs(np.diagonal(Rm, axis1=1, axis2=2))
    if np.any(diag.min(axis=1) <= 1e-14 * diag.max(axis=1)):
        raise RankDeficientError("projected LSPG matrix is rank deficient for some parameter")
    d = np.einsum("nsm,ns->nm", Qm, rhs)
    c = np.linalg.solve(Rm, d[..., None])[..., 0]
    return c, d


def lspg_condition_batch(art: LspgArtifacts, mus) -> np.ndarray:
    """2-norm condition of the weighted reduced operator, via its s x m projection."""
    Y = np.einsum("nq,qsm->nsm", art.thetas.a_batch(mus), art.Y)
    s = np.linalg.svd(Y, compute_uv=False)
    return s[:, 0] / s[:, -1]


def _stacked_coefficients(thetas: ThetaMap, mu, c) -> np.ndarray:
    return np.concatenate([np.kron(thetas.a(mu), c), -thetas.b(mu)])


def residual_norm_alg5(art: LspgArtifacts, mu, c) -> float:
    """||R P^T [theta^A (x) c; -theta^b]||, valid for any coefficient vector c."""
    if art.G_res is None:
        raise ValueError("residual evaluation by the stacked factor needs standard-mode artifacts")
    c = np.asarray(c, dtype=float)
    if c.shape != (art.m,):
        raise ValueError(f"coefficient vector must have length {art.m}")
    return float(np.linalg.norm(art.G_res @ _stacked_coefficients(art.thetas, mu, c)))


def residual_norm_alg5_batch(art: LspgArtifacts, mus, C) -> np.ndarray:
    if art.G_res is None:
        raise ValueError("residual evaluation by the stacked factor needs standard-mode artifacts")
    ta = art.thetas.a_batch(mus)
    tb = art.thetas.b_batch(mus)
    Z = np.concatenate([(ta[:, :, None] * C[:, None, :]).reshape(C.shape[0], -1), -tb], axis=1)
    return np.linalg.norm(Z @ art.G_res.T, axis=1)


def residual_norm_variant1(art: LspgArtifacts, mu, d) -> tuple:
    """sqrt(||b_bar||^2 - ||d||^2) for the LS minimizer; returns (value, clamped)."""
    if art.gram_b is None:
        raise ValueError("the Pythagorean residual needs prime-mode artifacts")
    tb = art.thetas.b(mu)
    rad = float(tb @ art.gram_b @ tb - d @ d)
    return (np.sqrt(rad), False) if rad >= 0 else (0.0, True)


def residual_norm_variant1_batch(art: LspgArtifacts, mus, D) -> tuple:
    tb = art.thetas.b_batch(mus)
    rad = np.einsum("ni,ij,nj->n", tb, art.gram_b, tb) - np.sum(D * D, axis=1)
    return np.sqrt(np.maximum(rad, 0.0)), rad < 0


def residual_norm_variant2(terms: ProjectedTerms, mu, c, rank_tol: float = 1e-13) -> float:
    """Orthogonal split of the residual through the data-free factorization.

    Needs full-size intermediates, so it is kept as a reference routine.
    """
    B = stacked_matrix(terms, with_data=False)
    qr = pivoted_qr(B, rank_tol=rank_tol, keep_q=True)
    bhat = terms.weight_sqrt[:, None] * terms.data_terms
    G = qr.times_perm_transpose()
    tb = terms.thetas.b(mu)
    inner = G @ np.kron(terms.thetas.a(mu), c) - (qr.Q.T @ bhat) @ tb
    outer = (bhat - qr.Q @ (qr.Q.T @ bhat)) @ tb
    return float(np.sqrt(inner @ inner + outer @ outer))


def residual_norm_direct(terms: ProjectedTerms, mu, c) -> float:
    """||G (A_mu U c - b_mu)|| evaluated at full size (reference)."""
    system = terms.system
    r = system.operator.apply(mu, terms.basis.U @ c) - system.data.vector(mu)
    return float(np.linalg.norm(terms.weight_sqrt * r))


def normal_equation_solve(terms: ProjectedTerms, mu) -> tuple:
    """Solve W^T A U c = W^T b with W = M_h A U; returns (c, cond of W^T A U).

    Reference path only: it squares the condition number of the QR route.
    """
    terms.update()
    AU = terms.full_operator_times_basis(mu)
    w = terms.weight_sqrt**2
    b = terms.system.data.vector(mu)
    W = w[:, None] * AU
    N = W.T @ AU
    s = np.linalg.svd(N, compute_uv=False)
    cond = float(s[0] / s[-1])
    if cond > 1e16:
        raise np.linalg.LinAlgError(f"normal equations are numerically singular (cond={cond:.2e})")
    return np.linalg.solve(N, W.T @ b), cond
