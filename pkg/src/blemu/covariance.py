"""Gaussian residual covariance and the prior moments of the emulated function.

With ``f(x) = g(x)'beta + u(x)`` and beta uncorrelated with u,

    E[f(x)]          = g(x)' E[beta]
    Cov[f(x), f(x')] = g(x)' Var[beta] g(x') + k(x, x')
    k(x, x')         = sigma2 * exp(-sum_k theta_k (x_k - x'_k)^2)

Distances are squared differences in raw input units.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import as_points
from .regression import BasisSpec, PriorBeliefs, design_matrix, theta_vector


@dataclass(frozen=True)
class KernelParams:
    sigma2: float
    theta: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "theta", theta_vector(self.theta))
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")

    @classmethod
    def from_prior(cls, prior: PriorBeliefs) -> "KernelParams":
        return cls(prior.sigma2, prior.theta)


def kernel(x1, x2, params: KernelParams) -> float:
    """Covariance of the residual process between two single points."""
    d = np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float)
    return float(params.sigma2 * np.exp(-np.dot(params.theta, d * d)))


def kernel_matrix(points_a, points_b, params: KernelParams) -> np.ndarray:
    a = as_points(points_a) if len(points_a) else np.empty((0, 2))
    b = as_points(points_b) if len(points_b) else np.empty((0, 2))
    theta = np.asarray(params.theta)
    # per-dimension squared differences keep the result exactly symmetric
    d2 = np.zeros((len(a), len(b)))
    for k in range(2):
        diff = a[:, k, None] - b[None, :, k]
        d2 += theta[k] * diff * diff
    return params.sigma2 * np.exp(-d2)


def prior_mean(points, prior: PriorBeliefs, basis: BasisSpec = BasisSpec()) -> np.ndarray:
    """E[f(x)] at each point."""
    if len(points) == 0:
        return np.empty(0)
    return design_matrix(points, basis) @ prior.beta_mean


def prior_cov(points_a, points_b, prior: PriorBeliefs, basis: BasisSpec = BasisSpec()) -> np.ndarray:
    """Cov[f(a_j), f(b_k)] for every pair; shape (len(a), len(b))."""
    if len(points_a) == 0 or len(points_b) == 0:
        return np.empty((len(points_a), len(points_b)))
    Ga = design_matrix(points_a, basis)
    Gb = design_matrix(points_b, basis)
    C = Ga @ prior.beta_var @ Gb.T + kernel_matrix(points_a, points_b, KernelParams.from_prior(prior))
    if points_a is points_b or (Ga.shape == Gb.shape and np.array_equal(points_a, points_b)):
        C = 0.5 * (C + C.T)
    return C


def prior_var(points, prior: PriorBeliefs, basis: BasisSpec = BasisSpec()) -> np.ndarray:
    """Diagonal of ``prior_cov(points, points)`` without forming the matrix."""
    if len(points) == 0:
        return np.empty(0)
    G = design_matrix(points, basis)
    return np.einsum("ij,jk,ik->i", G, prior.beta_var, G) + prior.sigma2
