"""Reduced-scale dense linear algebra for the snapshot basis and LS problems."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla

__all__ = [
    "NearDependenceError",
    "SnapshotBasis",
    "cgsr_append",
    "spectral_ratio",
    "PivotedQr",
    "pivoted_qr",
    "dense_weighted_ls_oracle",
]


class NearDependenceError(ValueError):
    """The appended column is numerically in the span of the basis."""


class SnapshotBasis:
    """Snapshot matrix F = U R grown one column at a time.

    Storage is preallocated in Fortran order and doubled on demand; the
    ``F``, ``U`` and ``R`` properties return views of the active part.
    """

    def __init__(self, n: int, capacity: int = 8, keep_snapshots: bool = True):
        self.n = n
        self.m = 0
        self.keep_snapshots = keep_snapshots
        self._U = np.zeros((n, capacity), order="F")
        self._F = np.zeros((n, capacity), order="F") if keep_snapshots else None
        self._R = np.zeros((capacity, capacity))
        self.params: list = []

    @classmethod
    def from_factors(cls, U: np.ndarray, R: np.ndarray, params=None) -> "SnapshotBasis":
        """Rebuild a basis from stored factors (snapshots are recovered as U R)."""
        n, m = U.shape
        basis = cls(n, capacity=max(m, 1), keep_snapshots=False)
        basis._U[:, :m] = U
        basis._R[:m, :m] = R
        basis.m = m
        basis.params = list(params) if params is not None else [None] * m
        return basis

    def prefix(self, m: int) -> "SnapshotBasis":
        """The nested basis of the first m snapshots."""
        if not 1 <= m <= self.m:
            raise ValueError(f"prefix length must lie in [1, {self.m}]")
        return SnapshotBasis.from_factors(self.U[:, :m], self.R[:m, :m], self.params[:m])

    def _grow(self):
        cap = 2 * self._U.shape[1]
        U = np.zeros((self.n, cap), order="F")
        U[:, : self.m] = self._U[:, : self.m]
        self._U = U
        if self._F is not None:
            F = np.zeros((self.n, cap), order="F")
            F[:, : self.m] = self._F[:, : self.m]
            self._F = F
        R = np.zeros((cap, cap))
        R[: self.m, : self.m] = self._R[: self.m, : self.m]
        self._R = R

    @property
    def U(self) -> np.ndarray:
        return self._U[:, : self.m]

    @property
    def R(self) -> np.ndarray:
        return self._R[: self.m, : self.m]

    @property
    def F(self) -> np.ndarray:
        if self._F is None:
            return self.U @ self.R
        return self._F[:, : self.m]

    def singular_values(self) -> np.ndarray:
        return sla.svdvals(self.R)


def cgsr_append(basis: SnapshotBasis, column: np.ndarray, param=None, tol: float = 1e-13) -> SnapshotBasis:
    """Classical Gram-Schmidt with one reorthogonalization pass.

    Only the new column of U and of R are written; earlier entries are left
    untouched so the factorization stays nested.
    """
    column = np.asarray(column, dtype=float)
    if column.shape != (basis.n,):
        raise ValueError(f"expected a column of length {basis.n}")
    norm0 = np.linalg.norm(column)
    m = basis.m
    U = basis.U
    w = column.copy()
    coef = np.zeros(m)
    for _ in range(2):
        if m:
            h = U.T @ w
            w -= U @ h
            coef += h
    norm = np.linalg.norm(w)
    if norm0 == 0.0 or norm <= tol * norm0:
        raise NearDependenceError(f"new snapshot is numerically dependent (residual {norm:.3e} of {norm0:.3e})")
    if m == basis._U.shape[1]:
        basis._grow()
    basis._U[:, m] = w / norm
    if basis._F is not None:
        basis._F[:, m] = column
    basis._R[:m, m] = coef
    basis._R[m, m] = norm
    basis.m = m + 1
    basis.params.append(None if param is None else tuple(np.atleast_1d(param).tolist()))
    return basis


def spectral_ratio(basis: SnapshotBasis) -> float:
    """sigma_m / sqrt(sum sigma_j^2) from the singular values of the small R factor."""
    if basis.m < 1:
        raise ValueError("spectral ratio needs at least one snapshot")
    s = basis.singular_values()
    return float(s[-1] / np.sqrt(np.sum(s**2)))


@dataclass
class PivotedQr:
    R: np.ndarray  # (s, Q_B), rows beyond the numerical rank dropped
    perm: np.ndarray  # column permutation: B[:, perm] = Q R
    rank: int
    Q: Optional[np.ndarray] = None

    def times_perm_transpose(self) -> np.ndarray:
        """R P^T, i.e. Q^T B restricted to the leading ``rank`` rows."""
        out = np.empty_like(self.R)
        out[:, self.perm] = self.R
        return out


def pivoted_qr(B: np.ndarray, rank_tol: float = 1e-13, keep_q: bool = False, overwrite: bool = False) -> PivotedQr:
    """Economy Householder QR with column pivoting and relative rank truncation."""
    if B.shape[0] < B.shape[1]:
        raise ValueError("pivoted_qr expects at least as many rows as columns")
    if keep_q:
        Q, R, perm = sla.qr(B, mode="economic", pivoting=True, overwrite_a=overwrite, check_finite=False)
    else:
        # LAPACK geqp3 directly: R is read off the factored array, no Q and no extra copy
        work = B if (overwrite and B.flags.f_contiguous) else np.asfortranarray(B).copy(order="F")
        qr, jpvt, _, _, info = sla.lapack.dgeqp3(work, overwrite_a=1)
        if info != 0:
            raise np.linalg.LinAlgError(f"geqp3 failed with info={info}")
        R = np.triu(qr[: B.shape[1]])
        perm = jpvt - 1
        Q = None
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        raise ValueError("pivoted QR of a zero matrix has rank 0")
    rank = int(np.sum(diag > rank_tol * diag[0]))
    R = np.ascontiguousarray(R[:rank])
    if Q is not None:
        Q = Q[:, :rank]
    return PivotedQr(R, perm, rank, Q)


def dense_weighted_ls_oracle(A: np.ndarray, weight_sqrt: np.ndarray, U: np.ndarray, b: np.ndarray) -> np.ndarray:
    """argmin_c ||G (A U c - b)|| by dense Householder QR (small problems only)."""
    M = weight_sqrt[:, None] * (A @ U)
    rhs = weight_sqrt * b
    Q, R = np.linalg.qr(M)
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-14 * diag.max():
        raise np.linalg.LinAlgError("weighted least-squares matrix is rank deficient")
    return sla.solve_triangular(R, Q.T @ rhs)
