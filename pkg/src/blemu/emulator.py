"""Bayes linear adjustment of the emulator by training runs.

For a collection of targets B and data D,

    E_D[B]   = E[B] + Cov[B, D] Var[D]^-1 (D - E[D])
    Var_D[B] = Var[B] - Cov[B, D] Var[D]^-1 Cov[D, B]

``Var[D]`` (plus a small diagonal jitter) is factorised once by Cholesky and
every prediction reuses the factor. Explicit inversion is confined to
``oracle_adjust``, which exists to cross-check the factorised path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .covariance import prior_cov, prior_mean, prior_var
from .data import SimulationGrid, as_points, cartesian, duplicate_rows, outside_box
from .errors import DataError, NumericalError
from .linalg import jittered_cholesky
from .regression import DEFAULT_NUGGET, BasisSpec, PriorBeliefs, elicit_prior, ols_fit

ARTIFACT_FORMAT = "blemu-emulator"
ARTIFACT_VERSION = 1


def _frozen(arr) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class AdjustedEmulator:
    """Emulator state after adjustment by the training data. Build with ``adjust``.

    ``nugget`` is the jitter fraction that was actually used (it may exceed
    ``prior.nugget`` after escalation) and ``jitter = nugget * prior.sigma2``.
    """

    train: SimulationGrid
    basis: BasisSpec
    prior: PriorBeliefs
    nugget: float
    jitter: float
    var_d_factor: np.ndarray
    weights: np.ndarray
    prior_mean_train: np.ndarray

    @property
    def train_points(self) -> np.ndarray:
        return self.train.points

    @property
    def train_yields(self) -> np.ndarray:
        return self.train.yields

    def var_d(self) -> np.ndarray:
        """Var[D] plus jitter, reassembled from the prior."""
        K = prior_cov(self.train.points, self.train.points, self.prior, self.basis)
        K = 0.5 * (K + K.T)
        return K + self.jitter * np.eye(len(K))


@dataclass(frozen=True)
class Prediction:
    mean: float
    variance: float
    extrapolation: bool
    raw_variance: float

    @property
    def sd(self) -> float:
        return float(np.sqrt(self.variance))


def adjust(train: SimulationGrid, basis: BasisSpec, prior: PriorBeliefs) -> AdjustedEmulator:
    """Adjust the prior by the training runs.

    Raises
    ------
    DataError
        Duplicate training inputs or a prior/basis size mismatch.
    NotPositiveDefiniteError
        Var[D] could not be factorised even at the largest jitter.
    """
    return _adjust(train, basis, prior, prior.nugget)


def fit_emulator(
    train: SimulationGrid,
    basis: BasisSpec = BasisSpec(),
    theta=(0.015, 0.015),
    nugget: float = DEFAULT_NUGGET,
) -> AdjustedEmulator:
    """Least-squares prior elicitation followed by adjustment."""
    return adjust(train, basis, elicit_prior(ols_fit(train, basis), theta, nugget))


def _adjust(train, basis, prior, nugget) -> AdjustedEmulator:
    if len(prior.beta_mean) != basis.p:
        raise DataError(f"prior has {len(prior.beta_mean)} coefficients but the basis has {basis.p} terms")
    dups = duplicate_rows(train.points)
    if dups:
        i, j = dups[0]
        raise DataError(f"duplicate training points at records {i} and {j} make Var[D] singular")
    K = prior_cov(train.points, train.points, prior, basis)
    L, used = jittered_cholesky(K, prior.sigma2, nugget)
    m = prior_mean(train.points, prior, basis)
    w = cho_solve((L, True), train.yields - m, check_finite=False)
    return AdjustedEmulator(
        train=train,
        basis=basis,
        prior=prior,
        nugget=used,
        jitter=used * prior.sigma2,
        var_d_factor=_frozen(L),
        weights=_frozen(w),
        prior_mean_train=_frozen(m),
    )


def predict_batch(em: AdjustedEmulator, points):
    """Adjusted means and variances at many points.

    Returns
    -------
    mean, variance, raw_variance : ndarray
        ``variance`` is ``raw_variance`` clamped at zero.
    extrapolation : ndarray of bool
        Points outside the bounding box of the training inputs.
    """
    pts = as_points(points) if len(points) else np.empty((0, 2))
    if len(pts) == 0:
        empty = np.empty(0)
        return empty, empty.copy(), empty.copy(), np.empty(0, dtype=bool)
    C = prior_cov(pts, em.train.points, em.prior, em.basis)
    mean = prior_mean(pts, em.prior, em.basis) + C @ em.weights
    V = solve_triangular(em.var_d_factor, C.T, lower=True, check_finite=False)
    raw = prior_var(pts, em.prior, em.basis) - np.einsum("ij,ij->j", V, V)
    lo, hi = em.train.bounds()
    return mean, np.maximum(raw, 0.0), raw, outside_box(pts, lo, hi)


def predict(em: AdjustedEmulator, x) -> Prediction:
    mean, var, raw, extrap = predict_batch(em, as_points(x))
    return Prediction(float(mean[0]), float(var[0]), bool(extrap[0]), float(raw[0]))


@dataclass(frozen=True, eq=False)
class Surface:
    """Predictions over a Cartesian grid; arrays are indexed [i_n, i_p]."""

    n_levels: np.ndarray
    p_levels: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    extrapolation: np.ndarray

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(self.variance)

    def __len__(self):
        return self.mean.size

    def predictions(self) -> list[Prediction]:
        """Flat row-major list (n outer, p inner)."""
        return [
            Prediction(float(m), float(v), bool(e), float(v))
            for m, v, e in zip(self.mean.ravel(), self.variance.ravel(), self.extrapolation.ravel())
        ]

    def rows(self):
        pts = cartesian(self.n_levels, self.p_levels)
        for (n, p), m, s, e in zip(pts, self.mean.ravel(), self.sd.ravel(), self.extrapolation.ravel()):
            yield float(n), float(p), float(m), float(s), bool(e)

    def write_csv(self, path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            fh.write("n,p,mean,sd,extrapolation\n")
            for n, p, m, s, e in self.rows():
                fh.write(f"{n!r},{p!r},{m!r},{s!r},{int(e)}\n")

    def to_dict(self) -> dict:
        return {
            "n_levels": self.n_levels.tolist(),
            "p_levels": self.p_levels.tolist(),
            "mean": self.mean.tolist(),
            "sd": self.sd.tolist(),
            "variance": self.variance.tolist(),
            "extrapolation": self.extrapolation.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Surface":
        return cls(
            np.array(d["n_levels"], dtype=float),
            np.array(d["p_levels"], dtype=float),
            np.array(d["mean"], dtype=float),
            np.array(d["variance"], dtype=float),
            np.array(d["extrapolation"], dtype=bool),
        )


def read_surface_csv(path) -> list[tuple[float, float, float, float, bool]]:
    rows = []
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    for line in lines[1:]:
        n, p, m, s, e = line.split(",")
        rows.append((float(n), float(p), float(m), float(s), bool(int(e))))
    return rows


def predict_grid(em: AdjustedEmulator, n_levels, p_levels) -> Surface:
    n_levels = np.asarray(n_levels, dtype=float).reshape(-1)
    p_levels = np.asarray(p_levels, dtype=float).reshape(-1)
    if n_levels.size == 0 or p_levels.size == 0:
        raise ValueError("level lists must be non-empty")
    mean, var, _, extrap = predict_batch(em, cartesian(n_levels, p_levels))
    shape = (n_levels.size, p_levels.size)
    return Surface(n_levels, p_levels, mean.reshape(shape), var.reshape(shape), extrap.reshape(shape))


def oracle_adjust(train: SimulationGrid, basis: BasisSpec, prior: PriorBeliefs, targets):
    """Reference adjustment by dense explicit inversion, for testing.

    Covariances are assembled here from scratch rather than through the
    ``covariance`` module. Returns the adjusted means and the full adjusted
    covariance matrix of ``targets``.
    """
    if len(train) > 500:
        raise ValueError("oracle_adjust is limited to 500 training points")
    T = as_points(targets) if len(targets) else np.empty((0, 2))
    if len(T) == 0:
        return np.empty(0), np.empty((0, 0))
    X = np.asarray(train.points, dtype=float)
    D = np.asarray(train.yields, dtype=float)
    theta = np.asarray(prior.theta)

    def g(pts):
        return np.stack([pts[:, 0] ** a * pts[:, 1] ** b for a, b in basis.powers], axis=1)

    def cov(A, B):
        sq = ((A[:, None, :] - B[None, :, :]) ** 2 * theta).sum(axis=-1)
        return g(A) @ prior.beta_var @ g(B).T + prior.sigma2 * np.exp(-sq)

    var_d = cov(X, X) + prior.nugget * prior.sigma2 * np.eye(len(X))
    if np.linalg.cond(var_d) > 1e14:
        raise NumericalError("Var[D] is numerically singular")
    inv = np.linalg.inv(var_d)
    c_bd = cov(T, X)
    means = g(T) @ prior.beta_mean + c_bd @ inv @ (D - g(X) @ prior.beta_mean)
    covariance = cov(T, T) - c_bd @ inv @ c_bd.T
    return means, covariance


def emulator_to_dict(em: AdjustedEmulator, metadata: dict | None = None) -> dict:
    """Self-describing JSON document: training data, basis, prior and jitter used."""
    return {
        "format": ARTIFACT_FORMAT,
        "version": ARTIFACT_VERSION,
        "basis": list(em.basis.terms),
        "prior": em.prior.to_dict(),
        "nugget_used": em.nugget,
        "jitter": em.jitter,
        "train": {
            "scenario_id": em.train.scenario_id,
            "n": em.train.points[:, 0].tolist(),
            "p": em.train.points[:, 1].tolist(),
            "yield": em.train.yields.tolist(),
        },
        "metadata": metadata or {},
    }


def emulator_from_dict(d: dict) -> AdjustedEmulator:
    """Rebuild an emulator from ``emulator_to_dict`` output.

    The stored nugget is reused directly, so the factorisation is the same one
    the original adjustment produced.
    """
    try:
        if d.get("format") != ARTIFACT_FORMAT:
            raise DataError(f"not an emulator artifact (format {d.get('format')!r})")
        t = d["train"]
        train = SimulationGrid(np.column_stack([t["n"], t["p"]]), t["yield"], t.get("scenario_id", ""))
        basis = BasisSpec(tuple(d["basis"]))
        prior = PriorBeliefs.from_dict(d["prior"])
        nugget = float(d["nugget_used"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"malformed emulator artifact: {exc}") from None
    return _adjust(train, basis, prior, nugget)


def save_emulator(em: AdjustedEmulator, path, metadata: dict | None = None) -> None:
    text = json.dumps(emulator_to_dict(em, metadata), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_emulator(path) -> tuple[AdjustedEmulator, dict]:
    path = Path(path)
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"no such emulator artifact: {path}") from None
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read emulator artifact {path}: {exc}") from None
    if not isinstance(d, dict):
        raise DataError(f"{path}: not an emulator artifact")
    return emulator_from_dict(d), d.get("metadata", {})
