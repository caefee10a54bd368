"""Angular quadrature rules for the discrete-ordinates discretization.

Two families are provided: Gauss-Legendre rules on the slab cosine
interval [-1, 1] and Chebyshev-Legendre (CL) product rules on the unit
sphere. Weights are scaled to sum to one so that the scalar flux is the
weighted mean of the angular flux over the direction set.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "AngularQuadrature",
    "legendre_values",
    "gauss_legendre",
    "gauss_legendre_slab",
    "chebyshev_legendre_sphere",
]


@dataclass(frozen=True)
class AngularQuadrature:
    """Direction nodes (n_dirs x dim_v) and weights summing to one."""

    dim_v: int
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def n_dirs(self) -> int:
        return self.weights.shape[0]

    def spatial_velocity(self, dim_x: int) -> np.ndarray:
        """Components of each direction along the first ``dim_x`` axes."""
        return self.nodes[:, :dim_x]


def legendre_values(n: int, x):
    """Return P_0..P_n and their derivatives at ``x`` (arrays of shape (n+1, *x.shape))."""
    x = np.asarray(x, dtype=float)
    p = np.zeros((n + 1,) + x.shape)
    dp = np.zeros_like(p)
    p[0] = 1.0
    if n >= 1:
        p[1] = x
        dp[1] = 1.0
    for k in range(1, n):
        # Bonnet recursion and its derivative
        p[k + 1] = ((2 * k + 1) * x * p[k] - k * p[k - 1]) / (k + 1)
        dp[k + 1] = dp[k - 1] + (2 * k + 1) * p[k]
    return p, dp


def gauss_legendre(n: int, tol: float = 1e-15, max_newton: int = 100):
    """Gauss-Legendre nodes and (unscaled, summing to 2) weights on [-1, 1].

    Nodes are found by Newton iteration on P_n from Chebyshev-type initial
    guesses; returned in increasing order.
    """
    if n < 1:
        raise ValueError("number of Gauss-Legendre points must be >= 1")
    k = np.arange(1, n + 1)
    x = -np.cos(np.pi * (k - 0.25) / (n + 0.5))
    for _ in range(max_newton):
        p, dp = legendre_values(n, x)
        step = p[n] / dp[n]
        x = x - step
        if np.max(np.abs(step)) < tol:
            break
    p, dp = legendre_values(n, x)
    w = 2.0 / ((1.0 - x * x) * dp[n] ** 2)
    # enforce exact antisymmetry of the nodes and symmetry of the weights
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    if n % 2 == 1:
        x[n // 2] = 0.0
    return x, w


def gauss_legendre_slab(n_points: int) -> AngularQuadrature:
    """Slab-geometry rule: GL cosines with weights halved to sum to one."""
    if n_points < 1:
        raise ValueError("n_points must be a positive integer")
    x, w = gauss_legendre(n_points)
    return AngularQuadrature(dim_v=1, nodes=x[:, None].copy(), weights=0.5 * w)


def chebyshev_legendre_sphere(n_theta: int, n_xi: int) -> AngularQuadrature:
    """(n_theta, n_xi) Chebyshev-Legendre product rule on the unit sphere.

    Azimuths theta_k = (2k-1) pi / n_theta carry weight 1/(2 n_theta); polar
    cosines xi_l are GL points with their standard weights. The node index
    runs over xi fastest: j = l + (k-1) n_xi.
    """
    if n_theta < 2 or n_theta % 2 != 0:
        raise ValueError("n_theta must be an even integer >= 2")
    if n_xi < 1:
        raise ValueError("n_xi must be a positive integer")
    theta = (2 * np.arange(1, n_theta + 1) - 1) * np.pi / n_theta
    w_theta = np.full(n_theta, 1.0 / (2 * n_theta))
    xi, w_xi = gauss_legendre(n_xi)
    tt, xx = np.meshgrid(theta, xi, indexing="ij")
    radial = np.sqrt(1.0 - xx**2)
    nodes = np.stack([np.cos(tt) * radial, np.sin(tt) * radial, xx], axis=-1)
    weights = np.outer(w_theta, w_xi)
    return AngularQuadrature(dim_v=3, nodes=nodes.reshape(-1, 3), weights=weights.reshape(-1))
