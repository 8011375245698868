"""Emulator diagnostics: resolution, standardised prediction errors, and
cross-validation of the correlation length.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .covariance import prior_var
from .data import InputPoint, SimulationGrid, as_points, cartesian
from .emulator import AdjustedEmulator, adjust, predict_batch
from .errors import ConfigError, EmulatorError, InsufficientDataError, NumericalError
from .regression import DEFAULT_NUGGET, BasisSpec, elicit_prior, ols_fit, theta_vector

DEFAULT_THRESHOLD = 3.0
HIGH_RESOLUTION = 0.7
SPE_VAR_FLOOR = 1e-12


def resolution_batch(em: AdjustedEmulator, points) -> np.ndarray:
    """``1 - Var_D[f(x)] / Var[f(x)]`` at each point, clamped to [0, 1]."""
    pts = as_points(points)
    _, var_d, _, _ = predict_batch(em, pts)
    var = prior_var(pts, em.prior, em.basis)
    if np.any(var <= 0):
        raise NumericalError("degenerate prior: zero prior variance")
    return np.clip(1.0 - var_d / var, 0.0, 1.0)


def resolution(em: AdjustedEmulator, x) -> float:
    return float(resolution_batch(em, as_points(x))[0])


@dataclass(frozen=True)
class PointDiagnostic:
    """Diagnostics at one input.

    ``role`` is ``"test"`` for held-out runs (with ``observed`` and ``spe``)
    or ``"grid"`` for resolution-only evaluation points. ``error`` is set
    when the SPE could not be formed because the adjusted variance fell
    below the floor.
    """

    point: InputPoint
    resolution: float
    mean: float
    sd: float
    role: str = "test"
    observed: float | None = None
    spe: float | None = None
    conflict: bool = False
    error: str | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["point"] = [self.point.n_level, self.point.p_level]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PointDiagnostic":
        d = dict(d)
        d["point"] = InputPoint(*map(float, d["point"]))
        return cls(**d)


def spe(
    em: AdjustedEmulator,
    test: SimulationGrid,
    threshold: float = DEFAULT_THRESHOLD,
    var_floor: float | None = None,
) -> list[PointDiagnostic]:
    """Standardised prediction errors ``(Y - E_D[f(x)]) / sd_D[f(x)]`` for test runs.

    Points whose adjusted variance is below ``var_floor`` (default
    ``1e-12 * sigma2``) get an ``error`` entry instead of an SPE.
    """
    if var_floor is None:
        var_floor = SPE_VAR_FLOOR * em.prior.sigma2
    mean, var, _, _ = predict_batch(em, test.points)
    res = np.clip(1.0 - var / prior_var(test.points, em.prior, em.basis), 0.0, 1.0)
    out = []
    for (n, p), y, m, v, r in zip(test.points, test.yields, mean, var, res):
        pt = InputPoint(float(n), float(p))
        if v < var_floor:
            out.append(PointDiagnostic(
                pt, float(r), float(m), float(np.sqrt(v)), "test", float(y),
                error=f"adjusted variance {v:.3e} below floor {var_floor:.3e}",
            ))
            continue
        z = float((y - m) / np.sqrt(v))
        out.append(PointDiagnostic(pt, float(r), float(m), float(np.sqrt(v)), "test", float(y), z, abs(z) > threshold))
    return out


def summarize(per_point: Sequence[PointDiagnostic], threshold: float) -> dict:
    tests = [d for d in per_point if d.role == "test"]
    grid = [d for d in per_point if d.role == "grid"]
    zs = [abs(d.spe) for d in tests if d.spe is not None]
    return {
        "threshold": threshold,
        "n_test": len(tests),
        "n_conflicts": sum(1 for d in tests if d.spe is not None and abs(d.spe) > threshold),
        "n_spe_errors": sum(1 for d in tests if d.error is not None),
        "max_abs_spe": max(zs) if zs else None,
        "fraction_abs_spe_le_2": (sum(1 for z in zs if z <= 2.0) / len(zs)) if zs else None,
        "n_grid": len(grid),
        "fraction_resolution_gt_0.7": (
            sum(1 for d in grid if d.resolution > HIGH_RESOLUTION) / len(grid) if grid else None
        ),
    }


@dataclass(frozen=True)
class DiagnosticReport:
    per_point: list[PointDiagnostic]
    threshold: float
    summary: dict
    metadata: dict = field(default_factory=dict)

    @property
    def conflicts(self) -> list[PointDiagnostic]:
        return [d for d in self.per_point if d.conflict]

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "summary": self.summary,
            "metadata": self.metadata,
            "per_point": [d.to_dict() for d in self.per_point],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiagnosticReport":
        return cls(
            [PointDiagnostic.from_dict(x) for x in d["per_point"]],
            float(d["threshold"]),
            dict(d["summary"]),
            dict(d.get("metadata", {})),
        )

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def read_json(cls, path) -> "DiagnosticReport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def write_csv(self, path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["role", "n", "p", "resolution", "spe", "conflict"])
            for d in self.per_point:
                w.writerow([
                    d.role, repr(d.point.n_level), repr(d.point.p_level), repr(d.resolution),
                    "" if d.spe is None else repr(d.spe), int(d.conflict),
                ])


def read_report_csv(path) -> list[dict]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        rows = []
        for r in csv.DictReader(fh):
            rows.append({
                "role": r["role"],
                "n": float(r["n"]),
                "p": float(r["p"]),
                "resolution": float(r["resolution"]),
                "spe": float(r["spe"]) if r["spe"] else None,
                "conflict": bool(int(r["conflict"])),
            })
        return rows


def report(
    em: AdjustedEmulator,
    test: SimulationGrid | None,
    grid_levels: tuple | None = None,
    threshold: float = DEFAULT_THRESHOLD,
) -> DiagnosticReport:
    """SPE over the test runs plus resolution over a prediction grid.

    ``grid_levels`` is an ``(n_levels, p_levels)`` pair; grid points follow
    the test points in ``per_point``, row-major with n outer.
    """
    per_point = spe(em, test, threshold) if test is not None else []
    meta = {"nugget_used": em.nugget, "jitter": em.jitter}
    if grid_levels is not None:
        pts = cartesian(*grid_levels)
        mean, var, raw, _ = predict_batch(em, pts)
        res = np.clip(1.0 - var / prior_var(pts, em.prior, em.basis), 0.0, 1.0)
        for (n, p), m, v, r in zip(pts, mean, var, res):
            per_point.append(PointDiagnostic(InputPoint(float(n), float(p)), float(r), float(m), float(np.sqrt(v)), "grid"))
        meta["min_raw_variance"] = float(raw.min())
    if test is not None:
        _, _, raw_t, _ = predict_batch(em, test.points)
        meta["min_raw_variance"] = float(min(raw_t.min(), meta.get("min_raw_variance", math.inf)))
    return DiagnosticReport(per_point, float(threshold), summarize(per_point, threshold), meta)


@dataclass(frozen=True)
class CvResult:
    theta_grid: list[tuple[float, float]]
    scores: list[float]
    chosen: tuple[float, float]
    folds: int
    seed: int

    @property
    def chosen_score(self) -> float:
        return self.scores[self.theta_grid.index(self.chosen)]

    def to_dict(self) -> dict:
        return {
            "theta_grid": [list(t) for t in self.theta_grid],
            "scores": list(self.scores),
            "chosen": list(self.chosen),
            "chosen_score": self.chosen_score,
            "folds": self.folds,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CvResult":
        return cls(
            [tuple(map(float, t)) for t in d["theta_grid"]],
            [float(s) for s in d["scores"]],
            tuple(map(float, d["chosen"])),
            int(d["folds"]),
            int(d["seed"]),
        )


def log_spaced_candidates(lo: float, hi: float, num: int) -> list[tuple[float, float]]:
    """Isotropic candidates ``(t, t)`` with ``t`` log-spaced over [lo, hi]."""
    if not 0 < lo <= hi or num < 1:
        raise ConfigError(f"bad candidate range lo={lo}, hi={hi}, num={num}")
    vals = [float(f"{t:.12g}") for t in np.geomspace(lo, hi, num)]
    return [(t, t) for t in vals]


def fold_indices(m: int, k: int, seed: int) -> list[np.ndarray]:
    perm = np.random.default_rng(seed).permutation(m)
    return [np.sort(f) for f in np.array_split(perm, k)]


def cross_validate_theta(
    grid: SimulationGrid,
    basis: BasisSpec,
    candidates: Sequence,
    k: int = 5,
    seed: int = 0,
    nugget: float = DEFAULT_NUGGET,
) -> CvResult:
    """Choose the correlation length by k-fold cross-validation.

    Every candidate sees the same seeded folds. For each fold the prior is
    re-elicited by least squares on the retained folds, the emulator is
    adjusted, and the held-out yields are predicted; the score is the RMSE
    pooled over all folds. Scores equal to the minimum (within 1e-9 relative)
    are settled in favour of the lexicographically smallest theta.
    """
    if k < 2:
        raise ConfigError(f"need at least 2 folds, got {k}")
    if len(grid) < 2 * k:
        raise ConfigError(f"{len(grid)} records are too few for {k}-fold cross-validation")
    cands = [theta_vector(c) for c in candidates]
    if not cands:
        raise ConfigError("no theta candidates given")

    folds = fold_indices(len(grid), k, seed)
    retained = [np.setdiff1d(np.arange(len(grid)), f) for f in folds]
    for r in retained:
        if len(r) <= basis.p:
            raise InsufficientDataError(f"fold complement of {len(r)} records is too small to fit {basis.p} terms")
    fits = [ols_fit(grid.subset(r), basis) for r in retained]

    scores = []
    for theta in cands:
        sse = 0.0
        for i, (fold, r, fit) in enumerate(zip(folds, retained, fits)):
            try:
                em = adjust(grid.subset(r), basis, elicit_prior(fit, theta, nugget))
            except EmulatorError as exc:
                raise type(exc)(f"theta {theta}, fold {i}: {exc}") from exc
            mean, _, _, _ = predict_batch(em, grid.points[fold])
            sse += float(np.sum((grid.yields[fold] - mean) ** 2))
        scores.append(math.sqrt(sse / len(grid)))

    best = min(scores)
    scale = float(np.max(np.abs(grid.yields))) or 1.0
    tol = 1e-9 * best + 1e-12 * scale
    chosen = min(c for c, s in zip(cands, scores) if s <= best + tol)
    return CvResult(cands, scores, chosen, k, seed)
