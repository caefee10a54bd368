"""Benchmark problem definitions and the registry of the six slab and 2D2v cases.

Cross sections and data are written as finite sums of affine coefficients
in the parameter times fixed spatial factors supported on axis-aligned
boxes. That form maps one-to-one onto the affine operator terms.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "AffineCoefficient",
    "Box",
    "CrossSectionTerm",
    "SourceTerm",
    "Discretization",
    "ProblemDefinition",
    "registry",
    "get_problem",
    "LATTICE_ABSORBER_CELLS",
]


@dataclass(frozen=True)
class AffineCoefficient:
    """theta(mu) = constant + sum_i linear[i] * mu[i]."""

    constant: float = 0.0
    linear: tuple = ()

    def __call__(self, mu) -> float:
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        val = self.constant
        for c, m in zip(self.linear, mu):
            val += c * m
        return float(val)

    def batch(self, mus: np.ndarray) -> np.ndarray:
        mus = np.atleast_2d(np.asarray(mus, dtype=float))
        out = np.full(mus.shape[0], float(self.constant))
        for i, c in enumerate(self.linear):
            out += c * mus[:, i]
        return out

    def lower_bound(self, lower, upper) -> float:
        """Infimum over the parameter box (attained at a corner)."""
        val = self.constant
        for c, lo, up in zip(self.linear, lower, upper):
            val += min(c * lo, c * up)
        return float(val)


def param(i: int, d: int, scale: float = 1.0) -> AffineCoefficient:
    lin = [0.0] * d
    lin[i] = scale
    return AffineCoefficient(0.0, tuple(lin))


def const(value: float) -> AffineCoefficient:
    return AffineCoefficient(float(value), ())


@dataclass(frozen=True)
class Box:
    lower: tuple
    upper: tuple

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        lo = np.asarray(self.lower)
        up = np.asarray(self.upper)
        return np.all((points >= lo) & (points <= up), axis=1)


@dataclass(frozen=True)
class CrossSectionTerm:
    """coefficient(mu) * weight(x) on the union of ``boxes`` (whole domain when empty)."""

    coefficient: AffineCoefficient
    boxes: tuple = ()
    weight: Optional[Callable] = None


@dataclass(frozen=True)
class SourceTerm:
    coefficient: AffineCoefficient
    function: Callable
    boxes: tuple = ()


@dataclass(frozen=True)
class Discretization:
    shape: tuple
    quadrature: tuple  # ("gl", n) or ("cl", n_theta, n_xi)
    degree: int = 1


@dataclass(frozen=True)
class ProblemDefinition:
    name: str
    dim_x: int
    lower: tuple
    upper: tuple
    scattering: tuple
    absorption: tuple
    sources: tuple
    inflow: Optional[Callable]
    param_lower: tuple
    param_upper: tuple
    train_shape: tuple
    n_test: int
    tol_sratio: float
    solver: str  # "direct" or "si-dsa"
    presets: dict = field(default_factory=dict)
    tol_si: float = 1e-12
    notes: str = ""

    @property
    def param_dim(self) -> int:
        return len(self.param_lower)

    def discretization(self, preset: str = "paper") -> Discretization:
        return self.presets[preset]

    def sigma_a_lower_bound(self) -> float:
        """Infimum of sigma_a over space and parameters.

        Only domain-wide, unweighted absorption terms are credited; anything
        else is conservatively reported as 0.
        """
        if not self.absorption or any(t.boxes or t.weight is not None for t in self.absorption):
            return 0.0
        return float(sum(t.coefficient.lower_bound(self.param_lower, self.param_upper) for t in self.absorption))

    def training_set(self, shape: Optional[tuple] = None) -> np.ndarray:
        shape = tuple(shape or self.train_shape)
        axes = [np.linspace(lo, up, n) for lo, up, n in zip(self.param_lower, self.param_upper, shape)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.reshape(-1) for g in grids], axis=1)

    def test_set(self, n: Optional[int] = None, seed: int = 0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        n = self.n_test if n is None else n
        lo = np.asarray(self.param_lower)
        up = np.asarray(self.param_upper)
        return lo + (up - lo) * rng.random((n, self.param_dim))

    def on_boundary(self, mus: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
        mus = np.atleast_2d(mus)
        lo = np.asarray(self.param_lower)
        up = np.asarray(self.param_upper)
        scale = rtol * (up - lo)
        return np.any((np.abs(mus - lo) <= scale) | (np.abs(mus - up) <= scale), axis=1)


def _slab_inflow(left: float, right: float):
    def inflow(points, velocity):
        v = velocity[0]
        x = np.atleast_2d(points)[:, 0]
        value = left if v > 0 else right
        return np.full(x.shape, float(value))
    return inflow


def _constant_source(value: float):
    def source(points):
        return np.full(np.atleast_2d(points).shape[0], float(value))
    return source


def _gaussian_source(center, width: float):
    center = np.asarray(center, dtype=float)

    def source(points):
        r2 = np.sum((np.atleast_2d(points) - center) ** 2, axis=1)
        return np.exp(-width * r2)
    return source


def _linear_x(points):
    return np.atleast_2d(points)[:, 0]


# Absorbing cells of the 7x7 lattice, as (column, row) offsets from the lower
# left cell. Transcribed from the layout figure: a checkerboard over the inner
# 5x5 block with the centre (source) cell and the cell above it left open.
LATTICE_ABSORBER_CELLS = tuple(
    (1 + k, 1 + l) for k in range(5) for l in range(5)
    if (k + l) % 2 == 0 and (k, l) not in ((2, 2), (2, 4))
)


def _cell(col: int, row: int) -> Box:
    return Box((-3.5 + col, -3.5 + row), (-2.5 + col, -2.5 + row))


def _lattice_boxes():
    absorbers = tuple(_cell(c, r) for c, r in LATTICE_ABSORBER_CELLS)
    scatterers = tuple(_cell(c, r) for c in range(7) for r in range(7) if (c, r) not in LATTICE_ABSORBER_CELLS)
    return absorbers, scatterers


def _pin_outer_boxes():
    return (
        Box((-1.0, -1.0), (-0.5, 1.0)),
        Box((0.5, -1.0), (1.0, 1.0)),
        Box((-0.5, -1.0), (0.5, -0.5)),
        Box((-0.5, 0.5), (0.5, 1.0)),
    )


QUICK_2D = Discretization(shape=(20, 20), quadrature=("cl", 8, 2))


def registry() -> dict:
    """The six benchmark problems keyed by name."""
    problems = {}
    problems["homogeneous-1d"] = ProblemDefinition(
        name="homogeneous-1d", dim_x=1, lower=(0.0,), upper=(4.0,),
        scattering=(CrossSectionTerm(param(0, 2)),),
        absorption=(CrossSectionTerm(param(1, 2)),),
        sources=(SourceTerm(const(1.0), _constant_source(0.01)),),
        inflow=None,
        param_lower=(1.0, 5.0), param_upper=(2.0, 6.0), train_shape=(21, 21), n_test=100,
        tol_sratio=1e-8, solver="direct",
        presets={"paper": Discretization((80,), ("gl", 16)), "quick": Discretization((80,), ("gl", 16))},
    )
    problems["two-material-1d"] = ProblemDefinition(
        name="two-material-1d", dim_x=1, lower=(0.0,), upper=(4.0,),
        scattering=(CrossSectionTerm(param(0, 2), (Box((1.0,), (4.0,)),)),),
        absorption=(CrossSectionTerm(param(1, 2), (Box((0.0,), (1.0,)),)),),
        sources=(),
        inflow=_slab_inflow(5.0, 0.0),
        param_lower=(90.0, 1.0), param_upper=(100.0, 2.0), train_shape=(101, 21), n_test=100,
        tol_sratio=1e-10, solver="direct",
        presets={"paper": Discretization((120,), ("gl", 16)), "quick": Discretization((40,), ("gl", 16))},
    )
    problems["varying-scattering-1d"] = ProblemDefinition(
        name="varying-scattering-1d", dim_x=1, lower=(0.0,), upper=(4.0,),
        scattering=(CrossSectionTerm(param(0, 2)), CrossSectionTerm(param(1, 2), (), _linear_x)),
        absorption=(),
        sources=(SourceTerm(const(1.0), _constant_source(0.01)),),
        inflow=None,
        param_lower=(90.0, 90.0), param_upper=(100.0, 100.0), train_shape=(101, 101), n_test=100,
        tol_sratio=1e-14, solver="direct",
        presets={"paper": Discretization((80,), ("gl", 16)), "quick": Discretization((40,), ("gl", 16))},
    )
    absorbers, scatterers = _lattice_boxes()
    problems["lattice-2d"] = ProblemDefinition(
        name="lattice-2d", dim_x=2, lower=(-3.5, -3.5), upper=(3.5, 3.5),
        scattering=(CrossSectionTerm(param(0, 2), scatterers),),
        absorption=(CrossSectionTerm(param(1, 2), absorbers),),
        sources=(SourceTerm(const(1.0), _constant_source(1.0), (_cell(3, 3),)),),
        inflow=None,
        param_lower=(0.5, 8.0), param_upper=(1.5, 12.0), train_shape=(21, 21), n_test=100,
        tol_sratio=1e-9, solver="si-dsa",
        presets={"paper": Discretization((70, 70), ("cl", 40, 6)), "quick": Discretization((21, 21), ("cl", 8, 2))},
        notes="cell layout transcribed from a figure (checkerboard lattice); see LATTICE_ABSORBER_CELLS",
    )
    problems["line-source-2d"] = ProblemDefinition(
        name="line-source-2d", dim_x=2, lower=(0.0, 0.0), upper=(1.0, 1.0),
        scattering=(CrossSectionTerm(param(0, 1)),),
        absorption=(),
        sources=(SourceTerm(const(1.0), _gaussian_source((0.5, 0.5), 100.0)),),
        inflow=None,
        param_lower=(0.5,), param_upper=(5.0,), train_shape=(101,), n_test=20,
        tol_sratio=1e-7, solver="si-dsa",
        presets={"paper": Discretization((80, 80), ("cl", 30, 6)), "quick": QUICK_2D},
    )
    inner = (Box((-0.5, -0.5), (0.5, 0.5)),)
    problems["pin-cell-2d"] = ProblemDefinition(
        name="pin-cell-2d", dim_x=2, lower=(-1.0, -1.0), upper=(1.0, 1.0),
        scattering=(CrossSectionTerm(const(100.0), _pin_outer_boxes()), CrossSectionTerm(param(0, 2), inner)),
        absorption=(CrossSectionTerm(param(1, 2), inner),),
        sources=(SourceTerm(const(1.0), _gaussian_source((0.0, 0.0), 100.0)),),
        inflow=None,
        param_lower=(0.05, 0.05), param_upper=(0.5, 0.5), train_shape=(19, 19), n_test=100,
        tol_sratio=1e-9, solver="si-dsa",
        presets={"paper": Discretization((80, 80), ("cl", 30, 6)), "quick": QUICK_2D},
    )
    return problems


def get_problem(name: str) -> ProblemDefinition:
    problems = registry()
    if name not in problems:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(problems)}")
    return problems[name]
