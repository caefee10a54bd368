"""Experiment harness: cached full-order solves, error reports, run
persistence, and the warm-start, residual-method, conditioning and online
timing studies."""
from __future__ import annotations

import csv
import json
import logging
import platform
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numba
import numpy as np
import scipy

from . import fom as fom_mod
from .galerkin import GalerkinArtifacts, galerkin_online
from .greedy import GreedyConfig, ReducedModel, TrainResult, train
from .linalg import SnapshotBasis
from .lspg import (LspgArtifacts, lspg_condition_batch, lspg_offline, lspg_online, lspg_online_batch,
                   normal_equation_solve, residual_norm_alg5, residual_norm_alg5_batch,
                   residual_norm_variant1_batch)
from .problems import Discretization, ProblemDefinition, get_problem
from .projection import ProjectedTerms, ThetaMap

__all__ = [
    "FomCache",
    "solve_test_set",
    "error_rows",
    "check_residual_monotone",
    "residual_term_scales",
    "write_run",
    "StoredRom",
    "errors_by_m",
    "residual_method_comparison",
    "conditioning_comparison",
    "rom_initial_guess_study",
    "prolong_dg",
    "online_timing",
    "run_experiment",
    "ERROR_COLUMNS",
]

log = logging.getLogger(__name__)

ERROR_COLUMNS = ("m", "e_l2_train", "e_res_train", "e_l2_test", "e_res_test", "spectral_ratio", "max_cond",
                 "t_fom_s", "t_sweep_s", "t_update_s")
TIMING_COLUMNS = ("t_fom_s", "t_sweep_s", "t_update_s")


def fmt(x) -> str:
    """Fixed 17-significant-digit rendering so reruns are byte-identical."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


class FomCache:
    """Memoized full-order solver keyed by the exact parameter tuple."""

    def __init__(self, system, method: Optional[str] = None, tol: Optional[float] = None):
        self.system = system
        self.method = method
        self.tol = tol
        self.store: dict = {}
        self.solves = 0
        self.iterations: list = []
        self.seconds: list = []

    def solution(self, mu) -> fom_mod.FomSolution:
        key = tuple(float(v) for v in np.atleast_1d(mu))
        if key not in self.store:
            sol = fom_mod.solve(self.system, np.asarray(key), method=self.method, tol=self.tol)
            self.solves += 1
            self.iterations.append(sol.iterations)
            self.seconds.append(sol.seconds)
            self.store[key] = sol.f
        return self.store[key]

    __call__ = solution


def solve_test_set(cache: FomCache, mus: np.ndarray, workers: int = 1) -> tuple:
    """Full-order solutions as columns plus a mask of points whose solve failed."""
    mus = np.atleast_2d(mus)

    def one(mu):
        try:
            return cache(mu)
        except (fom_mod.SolverDivergence, np.linalg.LinAlgError) as exc:
            log.warning("full-order solve failed at %s: %s", mu, exc)
            return None

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, mus))
    else:
        results = [one(mu) for mu in mus]
    failed = np.array([r is None for r in results])
    sols = np.full((cache.system.size, len(results)), np.nan)
    for i, r in enumerate(results):
        if r is not None:
            sols[:, i] = r
    return sols, failed


def error_rows(result: TrainResult, zero_timings: bool = False) -> list:
    rows = []
    for rec in result.log.records:
        row = {
            "m": rec.m, "e_l2_train": rec.e_l2_train, "e_res_train": rec.e_res_train,
            "e_l2_test": rec.e_l2_test, "e_res_test": rec.e_res_test, "spectral_ratio": rec.spectral_ratio,
            "max_cond": rec.max_cond, "t_fom_s": rec.t_fom_s, "t_sweep_s": rec.t_sweep_s, "t_update_s": rec.t_update_s,
        }
        if zero_timings:
            row.update({k: 0.0 for k in TIMING_COLUMNS})
        rows.append(row)
    return rows


def check_residual_monotone(curves: Sequence[np.ndarray], scales: np.ndarray, slack: float = 1e-12) -> tuple:
    """Check per-parameter residual curves (one array per m) are non-increasing.

    Returns (ok, worst violation relative to scale).
    """
    if len(curves) < 2:
        return True, 0.0
    arr = np.vstack(curves)
    excess = (arr[1:] - arr[:-1]) / scales[None, :]
    worst = float(np.nanmax(excess))
    return bool(worst <= slack), worst


def data_norms(system, mus) -> np.ndarray:
    return np.array([system.norm(system.data.vector(mu)) for mu in np.atleast_2d(mus)])


def residual_term_scales(model: ReducedModel, mus, chunk: int = 256) -> np.ndarray:
    """Magnitude of the summands in G(A_mu U c - b_mu) at the model's current coefficients.

    sum_q |theta_q| ||G T_q U c|| + ||G b_mu||, read off the stacked factor. Cancellation in
    the residual sum, and the rank truncation of the stacked QR, act relative to this size.
    Falls back to ||G b_mu|| when no standard stacked factor is available.
    """
    mus = np.atleast_2d(mus)
    art = model.residual_lspg
    if art is None or art.G_res is None:
        return data_norms(model.system, mus)
    m, n_a = art.m, art.thetas.n_a
    out = np.empty(mus.shape[0])
    for lo in range(0, mus.shape[0], chunk):
        part = mus[lo : lo + chunk]
        C, _ = model.solve(part)
        ta, tb = art.thetas.a_batch(part), art.thetas.b_batch(part)
        total = np.linalg.norm(tb @ art.G_res[:, n_a * m :].T, axis=1)
        for q in range(n_a):
            total += np.abs(ta[:, q]) * np.linalg.norm(C @ art.G_res[:, q * m : (q + 1) * m].T, axis=1)
        out[lo : lo + chunk] = total
    return out


# --------------------------------------------------------------------------
# persistence
# --------------------------------------------------------------------------

def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def library_versions() -> dict:
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__}


def write_run(out: Path, result: TrainResult, cfg: GreedyConfig, meta: dict, zero_timings: bool = False):
    """errors.csv, greedy_log.csv, selected_params.csv, basis.meta and artifacts.npz."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rows = error_rows(result, zero_timings)
    _write_csv(out / "errors.csv", ERROR_COLUMNS, [[r[c] for c in ERROR_COLUMNS] for r in rows])

    d = cfg.train.shape[1]
    mu_cols = [f"mu_{i + 1}" for i in range(d)]
    log_rows = []
    for rec in result.log.records:
        mu = rec.selected_mu if rec.selected_mu else (np.nan,) * d
        t = (0.0, 0.0, 0.0) if zero_timings else (rec.t_fom_s, rec.t_sweep_s, rec.t_update_s)
        log_rows.append([rec.m, rec.selected_index, *mu, rec.indicator_value, rec.spectral_ratio, rec.n_fom_solves,
                         rec.residual_clamped, *t])
    _write_csv(out / "greedy_log.csv",
               ["m", "selected_index", *mu_cols, "indicator", "spectral_ratio", "n_fom_solves", "residual_clamped",
                *TIMING_COLUMNS], log_rows)
    _write_csv(out / "selected_params.csv", ["order", "train_index", *mu_cols],
               [[i + 1, idx, *cfg.train[idx]] for i, idx in enumerate(result.selected)])

    model = result.model
    arrays = {"U": result.basis.U, "R": result.basis.R}
    if model.galerkin is not None:
        arrays.update(A_hat=model.galerkin.A_hat, b_hat=model.galerkin.b_hat)
    if model.lspg is not None:
        arrays.update(Y=model.lspg.Y, b_tilde=model.lspg.b_tilde)
        if model.lspg.gram_b is not None:
            arrays["gram_b"] = model.lspg.gram_b
    if model.residual_lspg is not None:
        arrays["G_res"] = model.residual_lspg.G_res
    np.savez(out / "artifacts.npz", **arrays)

    full_meta = dict(meta)
    full_meta.update({
        "rom": cfg.rom, "variant": cfg.variant, "tol_sratio": cfg.tol_sratio, "max_m": cfg.max_m,
        "kpoint": cfg.kpoint, "mu1": cfg.mu1 if isinstance(cfg.mu1, (str, int)) else list(cfg.mu1),
        "rank_tol": cfg.rank_tol, "n_train": int(cfg.train.shape[0]), "m": result.m, "status": result.log.status,
        "fom_solves": result.log.fom_solves, "full_dimension": int(result.basis.n),
        "lspg_mode": model.lspg.mode if model.lspg is not None else None,
        "lspg_rank": int(model.lspg.rank) if model.lspg is not None else None,
        "thetas": model.terms.thetas.to_dict(), "spectral_ratio_monotone": result.log.spectral_ratio_monotone(),
        "versions": library_versions(),
    })
    with open(out / "basis.meta", "w") as fh:
        json.dump(full_meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass
class StoredRom:
    """A trained ROM loaded from disk; online evaluation needs no full-order objects."""

    meta: dict
    arrays: dict
    thetas: ThetaMap

    @classmethod
    def load(cls, path) -> "StoredRom":
        path = Path(path)
        with open(path / "basis.meta") as fh:
            meta = json.load(fh)
        with np.load(path / "artifacts.npz") as data:
            arrays = {k: data[k] for k in data.files}
        return cls(meta, arrays, ThetaMap.from_dict(meta["thetas"]))

    @property
    def m(self) -> int:
        return self.arrays["R"].shape[0]

    def _lspg(self) -> LspgArtifacts:
        a = self.arrays
        mode = self.meta.get("lspg_mode") or "standard"
        return LspgArtifacts(mode, a["Y"], a["b_tilde"], a.get("G_res"), a.get("gram_b"), a["Y"].shape[1], self.thetas)

    def solve(self, mu) -> np.ndarray:
        mu = np.asarray(mu, dtype=float)
        if "A_hat" in self.arrays:
            return galerkin_online(GalerkinArtifacts(self.arrays["A_hat"], self.arrays["b_hat"], self.thetas), mu)
        if "Y" in self.arrays:
            return lspg_online(self._lspg(), mu)
        raise ValueError("stored run has no online artifacts for this variant")

    def residual(self, mu, c) -> float:
        if "G_res" not in self.arrays:
            raise ValueError("stored run has no residual artifacts")
        G = self.arrays["G_res"]
        art = LspgArtifacts("standard", self.arrays.get("Y"), None, G, None, G.shape[0], self.thetas)
        return residual_norm_alg5(art, np.asarray(mu, dtype=float), c)

    def lift(self, c) -> np.ndarray:
        return self.arrays["U"] @ c

    def basis(self) -> SnapshotBasis:
        return SnapshotBasis.from_factors(self.arrays["U"], self.arrays["R"])


# --------------------------------------------------------------------------
# per-m studies over a stored nested basis
# --------------------------------------------------------------------------

def _growing(basis: SnapshotBasis):
    """Yield a basis object whose active size grows 1, 2, ..., m in place."""
    work = SnapshotBasis.from_factors(basis.U, basis.R, basis.params)
    for k in range(1, basis.m + 1):
        work.m = k
        yield work


def errors_by_m(system, rom: str, basis: SnapshotBasis, mus: np.ndarray, solutions: np.ndarray,
                variant: str = "standard", rank_tol: float = 1e-13) -> dict:
    """L2 and residual errors at every parameter for every nested dimension."""
    mus = np.atleast_2d(mus)
    cfg = GreedyConfig(rom=rom, train=mus[:1], tol_sratio=1.0, variant=variant, rank_tol=rank_tol)
    work = SnapshotBasis.from_factors(basis.U, basis.R, basis.params)
    work.m = 0
    model = ReducedModel(system, cfg, work)
    w = system.weight.sqrt_diag[:, None]
    l2, res, cond = [], [], []
    for k in range(1, basis.m + 1):
        work.m = k
        model.refresh()
        C, D = model.solve(mus)
        l2.append(np.linalg.norm(w * (solutions - model.lift(C)), axis=0))
        res.append(model.residual(mus, C, D)[0])
        cond.append(model.condition(mus))
    return {"l2": np.array(l2), "res": np.array(res), "cond": np.array(cond)}


def residual_method_comparison(system, basis: SnapshotBasis, mus: np.ndarray, rank_tol: float = 1e-13) -> dict:
    """Residual of the LSPG minimizer by the pivoted-QR route and by the Pythagorean route, per m."""
    mus = np.atleast_2d(mus)
    work = SnapshotBasis.from_factors(basis.U, basis.R, basis.params)
    work.m = 0
    terms = ProjectedTerms(system, work)
    alg5, pyth, clamped = [], [], []
    for k in range(1, basis.m + 1):
        work.m = k
        terms.update()
        std = lspg_offline(terms, "standard", rank_tol)
        C, _ = lspg_online_batch(std, mus)
        alg5.append(residual_norm_alg5_batch(std, mus, C))
        prime = lspg_offline(terms, "prime", rank_tol)
        _, D = lspg_online_batch(prime, mus)
        r1, cl = residual_norm_variant1_batch(prime, mus, D)
        pyth.append(r1)
        clamped.append(cl)
    return {"alg5": np.array(alg5), "variant1": np.array(pyth), "clamped": np.array(clamped)}


def conditioning_comparison(system, basis: SnapshotBasis, m: int, mus: np.ndarray, rank_tol: float = 1e-13) -> dict:
    """Condition of the least-squares operator versus the normal-equation matrix at dimension m."""
    mus = np.atleast_2d(mus)
    terms = ProjectedTerms(system, basis.prefix(m)).update()
    art = lspg_offline(terms, "standard", rank_tol)
    qr_cond = lspg_condition_batch(art, mus)
    normal_cond = np.array([normal_equation_solve(terms, mu)[1] for mu in mus])
    return {"qr": qr_cond, "normal": normal_cond, "ratio": normal_cond / qr_cond**2}


# --------------------------------------------------------------------------
# warm-start study
# --------------------------------------------------------------------------

def prolong_dg(coarse_space, fine_space, coeffs: np.ndarray) -> np.ndarray:
    """L2 projection of a DG function onto a nested refinement (exact for nested meshes)."""
    return fine_space.project(lambda pts: coarse_space.evaluate(coeffs, pts))


def _density_model(system, problem: ProblemDefinition, m_max: int, train_shape, fom_solver=None):
    cfg = GreedyConfig(rom="g-l1", train=problem.training_set(train_shape), tol_sratio=1e-300, max_m=m_max,
                       track_residual=False, param_lower=problem.param_lower, param_upper=problem.param_upper)
    result = train(system, cfg, fom_solver=fom_solver)
    art = result.model.galerkin
    ratios = [r.spectral_ratio for r in result.log.records]

    def density(mu, m):
        m = min(m, art.m)
        c = galerkin_online(art.truncated(m), mu)
        return system.scalar_flux(result.basis.U[:, :m] @ c)

    return density, ratios, result


def rom_initial_guess_study(problem: ProblemDefinition, m_values: Sequence[int], test_mus: np.ndarray,
                            fine: Discretization, coarse: Optional[Discretization] = None,
                            train_shape=None, tol: Optional[float] = None) -> dict:
    """Average SI-DSA iterations from zero and from reduced-density initial guesses."""
    test_mus = np.atleast_2d(test_mus)
    fine_sys = fom_mod.build_system(problem, fine)
    m_max = max(m_values)

    def iterations(rho0_fn):
        its = []
        for mu in test_mus:
            rho0 = None if rho0_fn is None else rho0_fn(mu)
            its.append(fom_mod.solve(fine_sys, mu, method="si-dsa", tol=tol, initial_rho=rho0).iterations)
        return float(np.mean(its))

    out = {"m": list(m_values), "zero": iterations(None)}
    density, ratios, _ = _density_model(fine_sys, problem, m_max, train_shape)
    out["ratio"] = [ratios[min(m, len(ratios)) - 1] for m in m_values]
    out["fine"] = [iterations(lambda mu, m=m: density(mu, m)) for m in m_values]
    if coarse is not None:
        coarse_sys = fom_mod.build_system(problem, coarse)
        cdensity, _, _ = _density_model(coarse_sys, problem, m_max, train_shape)
        out["coarse"] = [iterations(lambda mu, m=m: prolong_dg(coarse_sys.space, fine_sys.space, cdensity(mu, m)))
                         for m in m_values]
    return out


# --------------------------------------------------------------------------
# online timing
# --------------------------------------------------------------------------

def _median_time(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def online_timing(problem: ProblemDefinition, shapes: Sequence[tuple], quadrature: tuple, m: int,
                  mus: np.ndarray, roms: Sequence[str] = ("g-l1", "g-res", "pg-l1", "pg-res"), repeat: int = 10,
                  train_shape=(5, 5), fom_repeat: int = 1) -> list:
    """Full-order versus online reduced solve times across mesh sizes at fixed m.

    One FOM cache per mesh is shared by the four ROM trainings.
    """
    rows = []
    for shape in shapes:
        system = fom_mod.build_system(problem, Discretization(tuple(shape), quadrature))
        cache = FomCache(system)
        train_mus = problem.training_set(train_shape)
        online = {}
        for rom in roms:
            cfg = GreedyConfig(rom=rom, train=train_mus, tol_sratio=1e-300, max_m=m, track_residual=False,
                               param_lower=problem.param_lower, param_upper=problem.param_upper)
            result = train(system, cfg, fom_solver=cache)
            model = result.model
            if cfg.projection == "galerkin":
                art = model.galerkin
                online[rom] = lambda mu, art=art: galerkin_online(art, mu)
            else:
                art = model.lspg.drop_offline()
                online[rom] = lambda mu, art=art: lspg_online(art, mu)
        for mu in np.atleast_2d(mus):
            fom_s = _median_time(lambda: fom_mod.solve(system, mu), fom_repeat)
            row = {"mu": tuple(float(v) for v in mu), "N": system.size, "shape": tuple(shape), "fom_s": fom_s}
            for rom, fn in online.items():
                fn(mu)  # warm-up
                row[rom] = _median_time(lambda: fn(mu), repeat)
            rows.append(row)
            log.info("timing %s", row)
    return rows


# --------------------------------------------------------------------------
# full experiment
# --------------------------------------------------------------------------

def run_experiment(problem_name: str, rom: str, preset: str = "quick", tol_sratio: Optional[float] = None,
                   max_m: int = 60, kpoint: int = 1, mu1="center", variant: str = "standard", seed: int = 0,
                   n_test: Optional[int] = None, train_shape=None, out: Optional[Path] = None,
                   workers: int = 1, record_train_residuals: bool = False, zero_timings: bool = False) -> dict:
    """Train one ROM with test-error tracking and optionally persist the run."""
    problem = get_problem(problem_name)
    system = fom_mod.build_system(problem, preset)
    cache = FomCache(system)
    test_mus = problem.test_set(n_test, seed)
    sols, failed = solve_test_set(cache, test_mus, workers)
    test_solves = cache.solves
    cfg = GreedyConfig(rom=rom, train=problem.training_set(train_shape),
                       tol_sratio=tol_sratio if tol_sratio is not None else problem.tol_sratio, max_m=max_m,
                       mu1=mu1, kpoint=kpoint, variant=variant, record_train_residuals=record_train_residuals,
                       param_lower=problem.param_lower, param_upper=problem.param_upper)
    result = train(system, cfg, fom_solver=cache, test_mus=test_mus[~failed], test_solutions=sols[:, ~failed])
    pg_res_ok, worst = True, 0.0
    if rom == "pg-res" and result.log.test_res:
        pg_res_ok, worst = check_residual_monotone(result.log.test_res,
                                                   residual_term_scales(result.model, test_mus[~failed]))
    meta = {"problem": problem_name, "preset": preset, "seed": seed, "n_test": int(test_mus.shape[0]),
            "failed_test_points": int(failed.sum()), "test_fom_solves": test_solves,
            "train_shape": list(train_shape or problem.train_shape), "pg_res_monotone": pg_res_ok,
            "pg_res_worst_increase": worst}
    if out is not None:
        write_run(Path(out), result, cfg, meta, zero_timings)
    return {"system": system, "result": result, "cfg": cfg, "test_mus": test_mus, "test_solutions": sols,
            "failed": failed, "cache": cache, "meta": meta}
