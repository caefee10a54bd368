"""Bookkeeping shared by both projections: parameter coefficients and the
cached products term_q U that grow column by column with the basis."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import SnapshotBasis
from .problems import AffineCoefficient

__all__ = ["ThetaMap", "ProjectedTerms"]


@dataclass(frozen=True)
class ThetaMap:
    """Coefficient functions of the operator terms (transport first) and data terms."""

    operator: tuple
    data: tuple

    @classmethod
    def from_system(cls, system) -> "ThetaMap":
        op = system.operator
        ops = (AffineCoefficient(1.0, ()),) + tuple(c for c, _ in op.scattering) + tuple(c for c, _ in op.absorption)
        return cls(ops, tuple(system.data.coefficients))

    @property
    def n_a(self) -> int:
        return len(self.operator)

    @property
    def n_b(self) -> int:
        return len(self.data)

    def a(self, mu) -> np.ndarray:
        return np.array([c(mu) for c in self.operator])

    def b(self, mu) -> np.ndarray:
        return np.array([c(mu) for c in self.data])

    def a_batch(self, mus) -> np.ndarray:
        return np.stack([c.batch(mus) for c in self.operator], axis=1)

    def b_batch(self, mus) -> np.ndarray:
        return np.stack([c.batch(mus) for c in self.data], axis=1)

    def to_dict(self) -> dict:
        enc = lambda cs: [[c.constant, list(c.linear)] for c in cs]  # noqa: E731
        return {"operator": enc(self.operator), "data": enc(self.data)}

    @classmethod
    def from_dict(cls, d: dict) -> "ThetaMap":
        dec = lambda cs: tuple(AffineCoefficient(float(a), tuple(b)) for a, b in cs)  # noqa: E731
        return cls(dec(d["operator"]), dec(d["data"]))


class ProjectedTerms:
    """term_q applied to every basis column, one N x m block per operator term."""

    def __init__(self, system, basis: SnapshotBasis):
        self.system = system
        self.basis = basis
        self.thetas = ThetaMap.from_system(system)
        self.n_terms = system.operator.n_terms
        self.m = 0
        self._cap = 0
        self._TU = [np.zeros((system.size, 0), order="F") for _ in range(self.n_terms)]

    def update(self) -> "ProjectedTerms":
        """Apply every term to basis columns added since the last call."""
        m_new = self.basis.m
        if m_new > self._cap:
            cap = max(m_new, 2 * self._cap, 4)
            for q in range(self.n_terms):
                grown = np.zeros((self.system.size, cap), order="F")
                grown[:, : self.m] = self._TU[q][:, : self.m]
                self._TU[q] = grown
            self._cap = cap
        if m_new > self.m:
            new_cols = self.basis.U[:, self.m : m_new]
            for q in range(self.n_terms):
                self._TU[q][:, self.m : m_new] = self.system.operator.apply_term(q, new_cols).reshape(-1, m_new - self.m)
            self.m = m_new
        return self

    def TU(self, q: int) -> np.ndarray:
        return self._TU[q][:, : self.m]

    @property
    def data_terms(self) -> np.ndarray:
        return self.system.data.terms

    @property
    def weight_sqrt(self) -> np.ndarray:
        return self.system.weight.sqrt_diag

    def full_operator_times_basis(self, mu) -> np.ndarray:
        """A_mu U assembled from the cached blocks (N x m)."""
        theta = self.thetas.a(mu)
        out = theta[0] * self.TU(0)
        for q in range(1, self.n_terms):
            out = out + theta[q] * self.TU(q)
        return out
