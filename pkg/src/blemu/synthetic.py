"""Synthetic yield grids resembling simulated crop response to fertiliser.

Shapes
------
monotone
    Saturating (Mitscherlich-type) response to N, with a P effect that fades
    as N increases.
constant
    A flat response.
step
    The monotone response plus a sudden jump of ``height`` once N reaches
    ``step_at``.
kernel-draw
    A linear trend plus an exact draw from the zero-mean Gaussian-covariance
    residual process; used for generate-and-recover checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .covariance import KernelParams, kernel_matrix
from .data import DESIGN_RANGE, SimulationGrid, cartesian, grid_levels
from .errors import ConfigError
from .linalg import jittered_cholesky

SHAPES = ("monotone", "constant", "step", "kernel-draw")

MONOTONE_DEFAULTS = {"a": 8.0, "b": 0.04, "c": 1.5, "d": 0.05, "baseline": 1.0}
DEFAULT_PARAMS = {
    "monotone": dict(MONOTONE_DEFAULTS),
    "constant": {"value": 5.0},
    "step": {**MONOTONE_DEFAULTS, "step_at": 50.0, "height": 3.0},
    "kernel-draw": {
        "sigma2": 1.0,
        "theta_n": 0.015,
        "theta_p": 0.015,
        "beta0": 5.0,
        "beta_n": 0.03,
        "beta_p": 0.01,
        "nugget": 1e-10,
    },
}


def default_levels() -> tuple[np.ndarray, np.ndarray]:
    return grid_levels(13), grid_levels(13)


def _monotone_errors(params) -> list[str]:
    errs = []
    if not params["a"] > 0:
        errs.append(f"a must be positive (got {params['a']})")
    if not params["b"] > 0:
        errs.append(f"b must be positive (got {params['b']})")
    if not params["c"] >= 0:
        errs.append(f"c must be non-negative (got {params['c']})")
    if not params["d"] >= 0:
        errs.append(f"d must be non-negative (got {params['d']})")
    if not params["c"] < params["a"]:
        errs.append(f"c must be smaller than a for a response increasing in N (got c={params['c']}, a={params['a']})")
    return errs


@dataclass(frozen=True)
class ScenarioSpec:
    """A synthetic scenario. ``params`` overrides the shape's defaults."""

    shape: str = "monotone"
    params: Mapping[str, float] = field(default_factory=dict)
    noise_sd: float = 0.0
    seed: int = 0
    levels: tuple = field(default_factory=default_levels)
    scenario_id: str = ""

    def __post_init__(self):
        errs = []
        if self.shape not in SHAPES:
            raise ConfigError(f"shape: unknown shape {self.shape!r}; expected one of {', '.join(SHAPES)}")
        defaults = DEFAULT_PARAMS[self.shape]
        unknown = sorted(set(self.params) - set(defaults))
        for name in unknown:
            errs.append(f"params.{name}: not a parameter of shape {self.shape!r}")
        merged = dict(defaults)
        numeric = True
        for k, v in self.params.items():
            if k in defaults:
                try:
                    merged[k] = float(v)
                except (TypeError, ValueError):
                    errs.append(f"params.{k}: not a number ({v!r})")
                    numeric = False
        if numeric:
            if self.shape in ("monotone", "step"):
                errs += [f"params.{e}" for e in _monotone_errors(merged)]
            if self.shape == "kernel-draw":
                if not merged["sigma2"] > 0:
                    errs.append(f"params.sigma2: must be positive (got {merged['sigma2']})")
                for k in ("theta_n", "theta_p", "nugget"):
                    if not merged[k] >= 0:
                        errs.append(f"params.{k}: must be non-negative (got {merged[k]})")
        try:
            noise = float(self.noise_sd)
            if not noise >= 0:
                errs.append(f"noise_sd: must be non-negative (got {self.noise_sd})")
        except (TypeError, ValueError):
            errs.append(f"noise_sd: not a number ({self.noise_sd!r})")
            noise = 0.0
        if not isinstance(self.seed, (int, np.integer)) or isinstance(self.seed, bool) or self.seed < 0:
            errs.append(f"seed: must be a non-negative integer (got {self.seed!r})")
        try:
            levels = tuple(np.asarray(lv, dtype=float).reshape(-1) for lv in self.levels)
        except (TypeError, ValueError):
            levels = ()
        if len(levels) != 2 or any(lv.size == 0 for lv in levels):
            errs.append("levels: need two non-empty level lists (N, P)")
        else:
            lo, hi = DESIGN_RANGE
            for name, lv in zip(("N", "P"), levels):
                if np.any(lv < lo) or np.any(lv > hi) or not np.all(np.isfinite(lv)):
                    errs.append(f"levels.{name}: values must lie in [0, 100]")
                elif len(np.unique(lv)) != lv.size:
                    errs.append(f"levels.{name}: values must be distinct")
        if errs:
            raise ConfigError("invalid scenario spec: " + "; ".join(errs))
        object.__setattr__(self, "params", merged)
        object.__setattr__(self, "noise_sd", noise)
        object.__setattr__(self, "levels", levels)

    def to_dict(self) -> dict:
        return {
            "shape": self.shape,
            "params": dict(self.params),
            "noise_sd": self.noise_sd,
            "seed": int(self.seed),
            "levels": [lv.tolist() for lv in self.levels],
            "scenario_id": self.scenario_id,
        }


def monotone_yield(n, p, params: Mapping[str, float] | None = None):
    """Saturating yield response: increasing in N, P mattering mainly at low N.

    ``a (1 - e^{-bn}) + c (1 - e^{-dp}) e^{-bn} + baseline``
    """
    prm = {**MONOTONE_DEFAULTS, **(params or {})}
    errs = _monotone_errors(prm)
    if errs:
        raise ValueError("; ".join(errs))
    a, b, c, d, base = (prm[k] for k in ("a", "b", "c", "d", "baseline"))
    decay = np.exp(-b * np.asarray(n, dtype=float))
    return a * (1.0 - decay) + c * (1.0 - np.exp(-d * np.asarray(p, dtype=float))) * decay + base


def step_yield(n, p, params: Mapping[str, float] | None = None):
    prm = {**DEFAULT_PARAMS["step"], **(params or {})}
    base = monotone_yield(n, p, {k: prm[k] for k in MONOTONE_DEFAULTS})
    return base + prm["height"] * (np.asarray(n, dtype=float) >= prm["step_at"])


def generate_grid(spec: ScenarioSpec) -> SimulationGrid:
    """Evaluate the scenario over the Cartesian product of its levels.

    The order of random draws is fixed (process draw, then noise), so a spec
    and seed always give the same grid.
    """
    pts = cartesian(*spec.levels)
    n, p = pts[:, 0], pts[:, 1]
    rng = np.random.default_rng(spec.seed)
    prm = spec.params
    if spec.shape == "monotone":
        y = monotone_yield(n, p, prm)
    elif spec.shape == "constant":
        y = np.full(len(pts), prm["value"])
    elif spec.shape == "step":
        y = step_yield(n, p, prm)
    else:
        kp = KernelParams(prm["sigma2"], (prm["theta_n"], prm["theta_p"]))
        L, _ = jittered_cholesky(kernel_matrix(pts, pts, kp), prm["sigma2"], prm["nugget"])
        y = prm["beta0"] + prm["beta_n"] * n + prm["beta_p"] * p + L @ rng.standard_normal(len(pts))
    if spec.noise_sd > 0:
        y = y + rng.normal(0.0, spec.noise_sd, len(pts))
    label = spec.scenario_id or f"{spec.shape}-seed{spec.seed}"
    return SimulationGrid(pts, y, label)
