"""Galerkin reduced model: U^T A_mu U c = U^T b_mu with affine offline/online split."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .projection import ProjectedTerms, ThetaMap

__all__ = [
    "IllConditionedError",
    "GalerkinArtifacts",
    "GalerkinBuilder",
    "galerkin_offline",
    "galerkin_online",
    "galerkin_online_batch",
    "galerkin_condition",
    "galerkin_condition_batch",
]

COND_LIMIT = 1e14


class IllConditionedError(np.linalg.LinAlgError):
    pass


@dataclass
class GalerkinArtifacts:
    A_hat: np.ndarray  # (Q_A, m, m)
    b_hat: np.ndarray  # (Q_b, m)
    thetas: ThetaMap

    @property
    def m(self) -> int:
        return self.A_hat.shape[1]

    def system(self, mu):
        return np.tensordot(self.thetas.a(mu), self.A_hat, axes=1), self.thetas.b(mu) @ self.b_hat

    def truncated(self, m: int) -> "GalerkinArtifacts":
        """Artifacts of the nested basis of dimension m."""
        return GalerkinArtifacts(self.A_hat[:, :m, :m].copy(), self.b_hat[:, :m].copy(), self.thetas)


class GalerkinBuilder:
    """Maintains reduced matrices, adding only the new row and column per basis vector."""

    def __init__(self, terms: ProjectedTerms):
        self.terms = terms
        self.m = 0
        self._A = np.zeros((terms.n_terms, 0, 0))
        self._b = np.zeros((terms.data_terms.shape[1], 0))

    def update(self) -> GalerkinArtifacts:
        terms = self.terms.update()
        m_new = terms.m
        if m_new > self.m:
            A = np.zeros((terms.n_terms, m_new, m_new))
            A[:, : self.m, : self.m] = self._A
            U = terms.basis.U
            new = U[:, self.m : m_new]
            for q in range(terms.n_terms):
                TU = terms.TU(q)
                A[q, :, self.m : m_new] = U.T @ TU[:, self.m : m_new]
                A[q, self.m : m_new, : self.m] = new.T @ TU[:, : self.m]
            b = np.zeros((self._b.shape[0], m_new))
            b[:, : self.m] = self._b
            b[:, self.m : m_new] = (new.T @ terms.data_terms).T
            self._A, self._b, self.m = A, b, m_new
        return GalerkinArtifacts(self._A.copy(), self._b.copy(), terms.thetas)


def galerkin_offline(terms: ProjectedTerms) -> GalerkinArtifacts:
    """Project every affine term onto the current basis."""
    terms.update()
    U = terms.basis.U
    A = np.stack([U.T @ terms.TU(q) for q in range(terms.n_terms)])
    b = (U.T @ terms.data_terms).T
    return GalerkinArtifacts(A, b, terms.thetas)


def galerkin_online(art: GalerkinArtifacts, mu) -> np.ndarray:
    """LU solve of the m x m reduced system at mu."""
    A, b = art.system(mu)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)  # singularity is reported through rcond below
        lu, piv = sla.lu_factor(A, check_finite=False)
    anorm = np.linalg.norm(A, 1)
    rcond, info = sla.lapack.dgecon(lu, anorm, norm="1")
    if rcond == 0.0 or 1.0 / rcond > COND_LIMIT:
        raise IllConditionedError(f"reduced Galerkin matrix is ill-conditioned (rcond={rcond:.2e})")
    return sla.lu_solve((lu, piv), b, check_finite=False)


def galerkin_online_batch(art: GalerkinArtifacts, mus) -> np.ndarray:
    """Solve at many parameters at once; returns (n_mu, m)."""
    ta = art.thetas.a_batch(mus)
    tb = art.thetas.b_batch(mus)
    A = np.einsum("nq,qij->nij", ta, art.A_hat)
    b = tb @ art.b_hat
    return np.linalg.solve(A, b[..., None])[..., 0]


def galerkin_condition(art: GalerkinArtifacts, mu) -> float:
    s = np.linalg.svd(art.system(mu)[0], compute_uv=False)
    return float(s[0] / s[-1])


def galerkin_condition_batch(art: GalerkinArtifacts, mus) -> np.ndarray:
    A = np.einsum("nq,qij->nij", art.thetas.a_batch(mus), art.A_hat)
    s = np.linalg.svd(A, compute_uv=False)
    return s[:, 0] / s[:, -1]
