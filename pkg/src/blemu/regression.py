"""Regression basis, least-squares fit, and prior moments elicited from the fit."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .data import SimulationGrid, as_points
from .errors import ConfigError, InsufficientDataError, SingularDesignError

DEFAULT_TERMS = ("1", "N", "P")
DEFAULT_NUGGET = 1e-8
SIGMA2_FLOOR_FRACTION = 1e-8

_FACTOR = re.compile(r"^(N|P)(?:\^(\d+))?$")


def parse_term(term: str) -> tuple[int, int]:
    """Exponents (a, b) of a monomial term ``N^a * P^b``.

    Accepted spellings: ``"1"``, ``"N"``, ``"P"``, ``"N^2"``, ``"N*P"``,
    ``"N^2*P"`` and so on; whitespace is ignored.
    """
    text = term.replace(" ", "")
    if text == "1":
        return (0, 0)
    a = b = 0
    for factor in text.split("*"):
        m = _FACTOR.match(factor)
        if m is None:
            raise ConfigError(f"cannot parse basis term {term!r}")
        power = int(m.group(2) or 1)
        if power < 1:
            raise ConfigError(f"basis term {term!r} has a zero power")
        if m.group(1) == "N":
            a += power
        else:
            b += power
    return (a, b)


@dataclass(frozen=True)
class BasisSpec:
    """Ordered monomial regression basis; the default is ``[1, N, P]``."""

    terms: tuple[str, ...] = DEFAULT_TERMS
    powers: tuple[tuple[int, int], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        terms = tuple(str(t) for t in self.terms)
        if not terms:
            raise ConfigError("basis needs at least one term")
        powers = tuple(parse_term(t) for t in terms)
        if len(set(powers)) != len(powers):
            raise ConfigError(f"basis terms are not distinct: {list(terms)}")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "powers", powers)

    @property
    def p(self) -> int:
        return len(self.terms)

    def constant_index(self) -> int | None:
        try:
            return self.powers.index((0, 0))
        except ValueError:
            return None


def design_matrix(points, basis: BasisSpec = BasisSpec()) -> np.ndarray:
    """Rows are basis evaluations ``g(x)`` at each point; shape (m, p)."""
    pts = as_points(points)
    n, p = pts[:, 0], pts[:, 1]
    cols = [n**a * p**b for a, b in basis.powers]
    return np.column_stack(cols)


def _frozen(arr) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class OlsFit:
    """Least-squares estimates from one training set.

    ``beta_cov`` is ``sigma2_hat * inv(X'X)``; ``y_var`` is the (population)
    variance of the training yields, used to scale the sigma2 floor.
    """

    beta_hat: np.ndarray
    beta_cov: np.ndarray
    sigma2_hat: float
    n: int
    y_var: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "beta_hat", _frozen(self.beta_hat))
        object.__setattr__(self, "beta_cov", _frozen(self.beta_cov))


def ols_fit(train: SimulationGrid, basis: BasisSpec = BasisSpec()) -> OlsFit:
    """Ordinary least squares via a QR factorisation of the column-scaled design.

    Raises
    ------
    InsufficientDataError
        Fewer than ``p + 1`` training records.
    SingularDesignError
        Some basis column is (numerically) a combination of earlier ones; the
        first such term is named.
    """
    X = design_matrix(train.points, basis)
    y = np.asarray(train.yields, dtype=float)
    m, p = X.shape
    if m <= p:
        raise InsufficientDataError(f"{m} training records cannot fit {p} regression terms with residual degrees of freedom")

    scale = np.linalg.norm(X, axis=0)
    for i, s in enumerate(scale):
        if s == 0.0:
            raise SingularDesignError(f"singular design: basis term {basis.terms[i]!r} is identically zero", basis.terms[i])
    Q, R = np.linalg.qr(X / scale)
    diag = np.abs(np.diag(R))
    for i, d in enumerate(diag):
        if d < 1e-10:
            raise SingularDesignError(
                f"singular design: basis term {basis.terms[i]!r} is collinear with earlier terms "
                "over the training inputs",
                basis.terms[i],
            )

    beta = solve_triangular(R, Q.T @ y) / scale
    resid = y - X @ beta
    sigma2 = float(resid @ resid) / (m - p)
    r_inv = solve_triangular(R, np.eye(p))
    cov = sigma2 * (r_inv @ r_inv.T) / np.outer(scale, scale)
    cov = 0.5 * (cov + cov.T)
    return OlsFit(beta, cov, sigma2, m, float(np.var(y)))


def theta_vector(theta) -> tuple[float, float]:
    """Broadcast a scalar or per-dimension correlation length to (theta_n, theta_p)."""
    arr = np.atleast_1d(np.asarray(theta, dtype=float)).reshape(-1)
    if arr.size == 1:
        arr = np.repeat(arr, 2)
    if arr.size != 2:
        raise ConfigError(f"theta needs one or two components, got {arr.size}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ConfigError(f"theta components must be finite and non-negative, got {arr.tolist()}")
    return (float(arr[0]), float(arr[1]))


@dataclass(frozen=True, eq=False)
class PriorBeliefs:
    """Second-order prior specification for the emulator.

    Attributes
    ----------
    beta_mean, beta_var : ndarray
        Expectation and variance matrix of the regression coefficients.
    sigma2 : float
        Variance of the residual process.
    theta : tuple of float
        Correlation length parameter per input (N, P).
    nugget : float
        Diagonal jitter as a fraction of ``sigma2``; numerical only.
    """

    beta_mean: np.ndarray
    beta_var: np.ndarray
    sigma2: float
    theta: tuple[float, float]
    nugget: float = DEFAULT_NUGGET

    def __post_init__(self):
        mean = _frozen(np.asarray(self.beta_mean, dtype=float).reshape(-1))
        var = _frozen(np.asarray(self.beta_var, dtype=float).reshape(len(mean), len(mean)))
        object.__setattr__(self, "beta_mean", mean)
        object.__setattr__(self, "beta_var", var)
        object.__setattr__(self, "theta", theta_vector(self.theta))
        object.__setattr__(self, "sigma2", float(self.sigma2))
        object.__setattr__(self, "nugget", float(self.nugget))
        if not np.allclose(var, var.T, rtol=1e-12, atol=0.0):
            raise ConfigError("beta_var must be symmetric")
        if not np.isfinite(self.sigma2) or self.sigma2 <= 0:
            raise ConfigError(f"sigma2 must be positive, got {self.sigma2}")
        if not np.isfinite(self.nugget) or self.nugget < 0:
            raise ConfigError(f"nugget must be non-negative, got {self.nugget}")

    def to_dict(self) -> dict:
        return {
            "beta_mean": self.beta_mean.tolist(),
            "beta_var": self.beta_var.tolist(),
            "sigma2": self.sigma2,
            "theta": list(self.theta),
            "nugget": self.nugget,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PriorBeliefs":
        return cls(np.array(d["beta_mean"]), np.array(d["beta_var"]), d["sigma2"], tuple(d["theta"]), d["nugget"])


def elicit_prior(
    fit: OlsFit,
    theta: Sequence[float] | float = (0.015, 0.015),
    nugget: float = DEFAULT_NUGGET,
    sigma2_floor: float | None = None,
) -> PriorBeliefs:
    """Plug the least-squares estimates in as prior moments.

    ``sigma2`` is raised to ``sigma2_floor`` when the fit leaves (almost) no
    residual variance. The default floor is ``1e-8`` times the training-yield
    variance, or ``1e-8`` when the yields are constant.
    """
    if sigma2_floor is None:
        sigma2_floor = SIGMA2_FLOOR_FRACTION * (fit.y_var if fit.y_var > 0 else 1.0)
    if sigma2_floor <= 0:
        raise ConfigError(f"sigma2 floor must be positive, got {sigma2_floor}")
    if nugget < 0:
        raise ConfigError(f"nugget must be non-negative, got {nugget}")
    sigma2 = max(fit.sigma2_hat, sigma2_floor)
    return PriorBeliefs(fit.beta_hat.copy(), fit.beta_cov.copy(), sigma2, theta_vector(theta), nugget)
