"""Greedy reduced-basis training loop with L1 or residual indicators."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla

from . import fom as fom_mod
from .galerkin import GalerkinArtifacts, GalerkinBuilder, galerkin_condition_batch, galerkin_online_batch
from .linalg import NearDependenceError, SnapshotBasis, cgsr_append, spectral_ratio
from .lspg import (LspgArtifacts, lspg_condition_batch, lspg_offline, lspg_online_batch, normal_equation_solve,
                   residual_norm_alg5_batch, residual_norm_variant1_batch)
from .projection import ProjectedTerms

__all__ = [
    "ROM_KINDS",
    "GreedyConfig",
    "IterationRecord",
    "GreedyLog",
    "ReducedModel",
    "TrainResult",
    "indicator_l1",
    "indicator_l1_batch",
    "select_argmax",
    "select_enhanced",
    "center_index",
    "train",
]

log = logging.getLogger(__name__)

ROM_KINDS = ("g-l1", "g-res", "pg-l1", "pg-res")
VARIANTS = ("standard", "prime", "normal-eq")


@dataclass
class GreedyConfig:
    rom: str
    train: np.ndarray
    tol_sratio: float
    max_m: int = 60
    mu1: object = "center"  # "center", an integer index, or a parameter tuple
    kpoint: int = 1
    variant: str = "standard"
    rank_tol: float = 1e-13
    track_residual: bool = True
    record_train_residuals: bool = False
    param_lower: Optional[tuple] = None
    param_upper: Optional[tuple] = None

    def __post_init__(self):
        self.train = np.atleast_2d(np.asarray(self.train, dtype=float))
        if self.rom not in ROM_KINDS:
            raise ValueError(f"unknown ROM kind {self.rom!r}; choose from {ROM_KINDS}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.variant != "standard" and self.projection != "lspg":
            raise ValueError("non-standard variants apply to the Petrov-Galerkin ROMs only")
        if not 0.0 < self.tol_sratio <= 1.0:
            raise ValueError("tol_sratio must lie in (0, 1]")
        if self.kpoint < 1:
            raise ValueError("kpoint must be >= 1")
        if self.max_m < 1:
            raise ValueError("max_m must be >= 1")
        if self.train.shape[0] == 0:
            raise ValueError("training set is empty")
        if np.unique(self.train, axis=0).shape[0] != self.train.shape[0]:
            raise ValueError("training set has duplicate parameters")

    @property
    def projection(self) -> str:
        return "galerkin" if self.rom.startswith("g-") else "lspg"

    @property
    def indicator(self) -> str:
        return self.rom.split("-")[1]


@dataclass
class IterationRecord:
    m: int
    spectral_ratio: float
    selected_index: int = -1
    selected_mu: tuple = ()
    indicator_value: float = float("nan")
    e_l2_train: float = float("nan")
    e_res_train: float = float("nan")
    e_l2_test: float = float("nan")
    e_res_test: float = float("nan")
    max_cond: float = float("nan")
    t_fom_s: float = 0.0
    t_sweep_s: float = 0.0
    t_update_s: float = 0.0
    n_fom_solves: int = 0
    residual_clamped: int = 0


@dataclass
class GreedyLog:
    records: list = field(default_factory=list)
    status: str = "running"
    fom_solves: int = 0
    train_residuals: list = field(default_factory=list)  # per m, residual at every training parameter
    test_l2: list = field(default_factory=list)  # per m, L2 error at every test parameter
    test_res: list = field(default_factory=list)
    test_cond: list = field(default_factory=list)

    @property
    def spectral_ratios(self) -> np.ndarray:
        return np.array([r.spectral_ratio for r in self.records])

    def spectral_ratio_monotone(self) -> bool:
        r = self.spectral_ratios
        return bool(np.all(np.diff(r) <= 1e-14))


# --------------------------------------------------------------------------
# indicators and selection
# --------------------------------------------------------------------------

def indicator_l1(R: np.ndarray, c: np.ndarray) -> float:
    """||R^{-1} c||_1: coordinates of the reduced solution in the snapshot basis."""
    return float(np.sum(np.abs(sla.solve_triangular(R, c, check_finite=False))))


def indicator_l1_batch(R: np.ndarray, C: np.ndarray) -> np.ndarray:
    return np.sum(np.abs(sla.solve_triangular(R, C.T, check_finite=False)), axis=0)


def select_argmax(values: np.ndarray, candidates: np.ndarray) -> int:
    """Candidate index with the largest value; ties go to the lowest training index."""
    values = np.asarray(values)
    best = np.max(values)
    return int(np.min(candidates[values == best]))


def select_enhanced(l1_values: np.ndarray, candidates: np.ndarray, k: int, true_error: Callable) -> tuple:
    """Top-k candidates by L1 value, then the one with the largest true error.

    ``true_error(index)`` returns (error, payload); the winner's payload is
    returned so its full-order solution can be reused.
    """
    order = np.lexsort((candidates, -np.asarray(l1_values)))
    top = candidates[order[: min(k, candidates.size)]]
    results = [(idx, *true_error(idx)) for idx in top]
    best = max(r[1] for r in results)
    winner = min((r for r in results if r[1] == best), key=lambda r: r[0])
    return winner[0], winner[1], winner[2], len(results)


def center_index(train: np.ndarray, lower=None, upper=None) -> int:
    lower = train.min(axis=0) if lower is None else np.asarray(lower)
    upper = train.max(axis=0) if upper is None else np.asarray(upper)
    dist = np.linalg.norm(train - 0.5 * (lower + upper), axis=1)
    return int(np.argmin(dist))


def _initial_index(cfg: GreedyConfig) -> int:
    if isinstance(cfg.mu1, str):
        if cfg.mu1 != "center":
            raise ValueError(f"unknown mu1 policy {cfg.mu1!r}")
        return center_index(cfg.train, cfg.param_lower, cfg.param_upper)
    if isinstance(cfg.mu1, (int, np.integer)):
        return int(cfg.mu1)
    target = np.asarray(cfg.mu1, dtype=float)
    dist = np.linalg.norm(cfg.train - target, axis=1)
    return int(np.argmin(dist))


# --------------------------------------------------------------------------
# reduced model wrapper
# --------------------------------------------------------------------------

class ReducedModel:
    """Evaluates a ROM and its residual at batches of parameters for the current basis."""

    def __init__(self, system, cfg: GreedyConfig, basis: SnapshotBasis):
        self.system = system
        self.cfg = cfg
        self.basis = basis
        self.terms = ProjectedTerms(system, basis)
        self.galerkin_builder = GalerkinBuilder(self.terms) if cfg.projection == "galerkin" else None
        self.galerkin: Optional[GalerkinArtifacts] = None
        self.lspg: Optional[LspgArtifacts] = None  # artifacts used for the solve
        self.residual_lspg: Optional[LspgArtifacts] = None  # standard artifacts for residuals

    @property
    def needs_residual(self) -> bool:
        return self.cfg.indicator == "res" or self.cfg.track_residual

    def refresh(self):
        self.terms.update()
        cfg = self.cfg
        if self.galerkin_builder is not None:
            self.galerkin = self.galerkin_builder.update()
        mode = "prime" if cfg.variant == "prime" else "standard"
        if cfg.projection == "lspg" and cfg.variant != "normal-eq":
            self.lspg = lspg_offline(self.terms, mode, cfg.rank_tol)
        self.residual_lspg = None
        if self.needs_residual and cfg.variant != "prime":
            if self.lspg is not None and self.lspg.mode == "standard":
                self.residual_lspg = self.lspg
            else:
                self.residual_lspg = lspg_offline(self.terms, "standard", cfg.rank_tol)

    def solve(self, mus) -> tuple:
        """Reduced coefficients (n, m) and, for the LS solve, the projected right sides."""
        mus = np.atleast_2d(mus)
        if self.cfg.projection == "galerkin":
            return galerkin_online_batch(self.galerkin, mus), None
        if self.cfg.variant == "normal-eq":
            return np.stack([normal_equation_solve(self.terms, mu)[0] for mu in mus]), None
        return lspg_online_batch(self.lspg, mus)

    def residual(self, mus, C, D=None) -> tuple:
        """Weighted residual norms and the count of clamped Pythagorean evaluations."""
        mus = np.atleast_2d(mus)
        if self.cfg.variant == "prime":
            vals, clamped = residual_norm_variant1_batch(self.lspg, mus, D)
            return vals, int(np.sum(clamped))
        return residual_norm_alg5_batch(self.residual_lspg, mus, C), 0

    def condition(self, mus) -> np.ndarray:
        if self.cfg.projection == "galerkin":
            return galerkin_condition_batch(self.galerkin, mus)
        if self.lspg is not None:
            return lspg_condition_batch(self.lspg, mus)
        return np.array([normal_equation_solve(self.terms, mu)[1] for mu in np.atleast_2d(mus)])

    def lift(self, C) -> np.ndarray:
        return self.basis.U @ np.atleast_2d(C).T

    def l1(self, C) -> np.ndarray:
        return indicator_l1_batch(self.basis.R, np.atleast_2d(C))


@dataclass
class TrainResult:
    basis: SnapshotBasis
    model: ReducedModel
    log: GreedyLog
    selected: list  # training indices in selection order

    @property
    def m(self) -> int:
        return self.basis.m


def _chunks(n: int, size: int):
    for start in range(0, n, size):
        yield slice(start, min(n, start + size))


def train(system, cfg: GreedyConfig, fom_solver: Optional[Callable] = None, test_mus=None,
          test_solutions=None, chunk: int = 4096) -> TrainResult:
    """Greedy offline stage; stops on the spectral ratio, the iteration cap or saturation.

    ``test_solutions`` (N x n_test) enables per-m test errors.
    """
    fom_solver = fom_solver or (lambda mu: fom_mod.solve(system, mu).f)
    train_mus = cfg.train
    n_train = train_mus.shape[0]
    basis = SnapshotBasis(system.size)
    model = ReducedModel(system, cfg, basis)
    glog = GreedyLog()
    selected = []
    weight = system.weight.sqrt_diag

    def h_norm(X):
        return np.linalg.norm(weight[:, None] * X, axis=0)

    # first snapshot
    first = _initial_index(cfg)
    t0 = time.perf_counter()
    f = fom_solver(train_mus[first])
    t_fom = time.perf_counter() - t0
    glog.fom_solves += 1
    cgsr_append(basis, f, train_mus[first])
    selected.append(first)
    ratio = 1.0
    pending = IterationRecord(m=1, spectral_ratio=ratio, selected_index=first, selected_mu=tuple(train_mus[first]),
                              t_fom_s=t_fom, n_fom_solves=1)

    while True:
        t0 = time.perf_counter()
        model.refresh()
        pending.t_update_s += time.perf_counter() - t0
        record = pending
        m = basis.m
        # test-set errors for the current dimension
        if test_solutions is not None:
            Ct, Dt = model.solve(test_mus)
            err = h_norm(test_solutions - model.lift(Ct))
            glog.test_l2.append(err)
            record.e_l2_test = float(np.max(err))
            if model.needs_residual or cfg.variant == "prime":
                res, _ = model.residual(test_mus, Ct, Dt)
                glog.test_res.append(res)
                record.e_res_test = float(np.max(res))
            cond = model.condition(test_mus)
            glog.test_cond.append(cond)
            record.max_cond = float(np.max(cond))
        if ratio <= cfg.tol_sratio or m >= cfg.max_m or len(selected) == n_train:
            glog.records.append(record)
            glog.status = "converged" if ratio <= cfg.tol_sratio else ("max_m" if m >= cfg.max_m else "exhausted")
            break

        # indicator sweep over the remaining training parameters
        t0 = time.perf_counter()
        mask = np.ones(n_train, dtype=bool)
        mask[selected] = False
        candidates = np.flatnonzero(mask)
        sweep_idx = np.arange(n_train) if cfg.record_train_residuals else candidates
        C = np.empty((n_train, m))
        D = np.empty((n_train, m)) if cfg.variant == "prime" else None
        res_all = np.full(n_train, np.nan)
        clamped = 0
        for sl in _chunks(sweep_idx.size, chunk):
            idx = sweep_idx[sl]
            Cc, Dc = model.solve(train_mus[idx])
            C[idx] = Cc
            if D is not None:
                D[idx] = Dc
            if model.needs_residual or cfg.variant == "prime":
                r, k = model.residual(train_mus[idx], Cc, Dc)
                res_all[idx] = r
                clamped += k
        if cfg.record_train_residuals:
            glog.train_residuals.append(res_all.copy())
        if cfg.indicator == "l1":
            values = model.l1(C[candidates])
        else:
            values = res_all[candidates]
        record.t_sweep_s = time.perf_counter() - t0
        record.residual_clamped = clamped

        # selection and full-order solve
        t0 = time.perf_counter()
        if cfg.indicator == "l1" and cfg.kpoint > 1:
            def true_error(idx):
                sol = fom_solver(train_mus[idx])
                return float(h_norm((sol - basis.U @ C[idx])[:, None])[0]), sol
            nxt, _, f, n_solved = select_enhanced(values, candidates, cfg.kpoint, true_error)
            ind_value = float(values[np.flatnonzero(candidates == nxt)[0]])
        else:
            nxt = select_argmax(values, candidates)
            ind_value = float(values[np.flatnonzero(candidates == nxt)[0]])
            f = fom_solver(train_mus[nxt])
            n_solved = 1
        glog.fom_solves += n_solved
        t_fom = time.perf_counter() - t0
        record.e_l2_train = float(h_norm((f - basis.U @ C[nxt])[:, None])[0])
        if model.needs_residual or cfg.variant == "prime":
            record.e_res_train = float(res_all[nxt])
        glog.records.append(record)

        # basis growth
        t0 = time.perf_counter()
        try:
            cgsr_append(basis, f, train_mus[nxt])
        except NearDependenceError as exc:
            log.info("stopping: %s", exc)
            glog.status = "saturated"
            break
        selected.append(nxt)
        ratio = spectral_ratio(basis)
        pending = IterationRecord(m=basis.m, spectral_ratio=ratio, selected_index=nxt,
                                  selected_mu=tuple(train_mus[nxt]), indicator_value=ind_value,
                                  t_fom_s=t_fom, n_fom_solves=n_solved,
                                  t_update_s=time.perf_counter() - t0)
        log.debug("m=%d selected %s ratio=%.3e", basis.m, train_mus[nxt], ratio)

    if not glog.spectral_ratio_monotone():
        log.warning("spectral ratio is not monotonically non-increasing")
    return TrainResult(basis, model, glog, selected)
