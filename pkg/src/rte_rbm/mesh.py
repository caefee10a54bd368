"""Uniform Cartesian meshes and per-direction sweep orderings.

Elements are numbered ``e = ix * ny + iy`` (``ny = 1`` in 1D). Directions
sharing the sign pattern of their spatial velocity share one ordering, so
orderings are stored once per sign group and referenced per direction.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .quadrature import AngularQuadrature

__all__ = ["SpatialMesh", "SweepOrdering", "SweepPlan", "build_sweep_orderings", "direction_signs"]


@dataclass(frozen=True)
class SpatialMesh:
    """Uniform Cartesian partition of a box in 1 or 2 dimensions."""

    lower: tuple
    upper: tuple
    shape: tuple

    def __post_init__(self):
        if not (len(self.lower) == len(self.upper) == len(self.shape)) or len(self.shape) not in (1, 2):
            raise ValueError("mesh must be 1D or 2D with consistent bounds and shape")
        if any(n < 1 for n in self.shape):
            raise ValueError("element counts must be positive")
        if any(u <= lo for lo, u in zip(self.lower, self.upper)):
            raise ValueError("upper bounds must exceed lower bounds")
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        object.__setattr__(self, "shape", tuple(int(v) for v in self.shape))

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def n_elements(self) -> int:
        return int(np.prod(self.shape))

    @property
    def widths(self) -> tuple:
        return tuple((u - lo) / n for lo, u, n in zip(self.lower, self.upper, self.shape))

    @property
    def element_volume(self) -> float:
        return float(np.prod(self.widths))

    def axis_nodes(self, axis: int) -> np.ndarray:
        return np.linspace(self.lower[axis], self.upper[axis], self.shape[axis] + 1)

    def multi_index(self) -> np.ndarray:
        """(n_elements, dim) array of per-axis element indices."""
        grids = np.meshgrid(*[np.arange(n) for n in self.shape], indexing="ij")
        return np.stack([g.reshape(-1) for g in grids], axis=1)

    def element_lower_corners(self) -> np.ndarray:
        idx = self.multi_index()
        return np.asarray(self.lower) + idx * np.asarray(self.widths)

    def neighbor(self, axis: int, offset: int) -> np.ndarray:
        """Element index shifted by ``offset`` along ``axis``; -1 outside the mesh."""
        idx = self.multi_index()
        shifted = idx.copy()
        shifted[:, axis] += offset
        inside = (shifted[:, axis] >= 0) & (shifted[:, axis] < self.shape[axis])
        flat = np.ravel_multi_index(tuple(np.clip(shifted, 0, np.asarray(self.shape) - 1).T), self.shape)
        return np.where(inside, flat, -1)


@dataclass(frozen=True)
class SweepOrdering:
    """Element permutation for one direction; upwind neighbors precede each element."""

    direction: int
    order: np.ndarray
    upwind: np.ndarray  # (n_elements, dim) upwind neighbor per axis, -1 on the inflow boundary


@dataclass(frozen=True)
class SweepPlan:
    """Orderings grouped by sign pattern; ``group[j]`` selects the pattern of direction j."""

    signs: np.ndarray  # (n_groups, dim) of +1/-1
    orders: np.ndarray  # (n_groups, n_elements)
    upwind: np.ndarray  # (n_groups, n_elements, dim)
    group: np.ndarray  # (n_dirs,)
    orderings: list = field(repr=False)


def direction_signs(velocity: np.ndarray) -> np.ndarray:
    """Sign pattern of spatial velocities; a zero component counts as positive."""
    return np.where(velocity >= 0.0, 1, -1).astype(np.int64)


def _ordering_for(mesh: SpatialMesh, signs) -> tuple:
    ranges = [range(n) if s > 0 else range(n - 1, -1, -1) for n, s in zip(mesh.shape, signs)]
    order = np.array([np.ravel_multi_index(t, mesh.shape) for t in itertools.product(*ranges)], dtype=np.int64)
    upwind = np.stack([mesh.neighbor(axis, -int(s)) for axis, s in enumerate(signs)], axis=1).astype(np.int64)
    return order, upwind


def build_sweep_orderings(mesh: SpatialMesh, quad: AngularQuadrature) -> SweepPlan:
    """One valid upwind-first ordering per direction of ``quad`` on ``mesh``."""
    velocity = quad.spatial_velocity(mesh.dim)
    dir_signs = direction_signs(velocity)
    patterns = np.array(list(itertools.product(*([[1, -1]] * mesh.dim))), dtype=np.int64)
    orders, upwinds = zip(*(_ordering_for(mesh, p) for p in patterns))
    orders = np.stack(orders)
    upwinds = np.stack(upwinds)
    group = np.array([int(np.flatnonzero((patterns == s).all(axis=1))[0]) for s in dir_signs], dtype=np.int64)
    orderings = [SweepOrdering(j, orders[g], upwinds[g]) for j, g in enumerate(group)]
    return SweepPlan(patterns, orders, upwinds, group, orderings)
