"""Discrete-ordinates DG solver for the parametric steady radiative transfer
equation and greedy reduced-basis ROMs (Galerkin and least-squares
Petrov-Galerkin, with L1 or residual indicators)."""
from .bench import FomCache, StoredRom, run_experiment
from .fom import FomSolution, SiConfig, build_system, solve, solve_direct, solve_si, solve_si_dsa
from .greedy import GreedyConfig, TrainResult, train
from .linalg import SnapshotBasis, cgsr_append, pivoted_qr, spectral_ratio
from .problems import get_problem, registry
from .quadrature import chebyshev_legendre_sphere, gauss_legendre_slab

__version__ = "0.1.0"

__all__ = [
    "FomCache",
    "StoredRom",
    "run_experiment",
    "FomSolution",
    "SiConfig",
    "build_system",
    "solve",
    "solve_direct",
    "solve_si",
    "solve_si_dsa",
    "GreedyConfig",
    "TrainResult",
    "train",
    "SnapshotBasis",
    "cgsr_append",
    "pivoted_qr",
    "spectral_ratio",
    "get_problem",
    "registry",
    "chebyshev_legendre_sphere",
    "gauss_legendre_slab",
]
