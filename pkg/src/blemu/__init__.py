"""Bayes linear emulation of gridded simulator output.

Typical use::

    from blemu import load_grid, split, BasisSpec, ols_fit, elicit_prior, adjust, predict

    grid = load_grid("yields.csv")
    parts = split(grid, 0.8, seed=1)
    basis = BasisSpec()                      # [1, N, P]
    prior = elicit_prior(ols_fit(parts.train, basis), theta=0.015)
    em = adjust(parts.train, basis, prior)
    predict(em, (50.0, 25.0))
"""

__version__ = "0.1.0"

from .covariance import KernelParams, kernel, kernel_matrix, prior_cov, prior_mean, prior_var
from .data import (
    InputPoint,
    SimulationGrid,
    SimulationRecord,
    SplitGrid,
    block_split,
    load_grid,
    split,
    validate_extrapolation,
    write_grid,
)
from .diagnostics import (
    CvResult,
    DiagnosticReport,
    PointDiagnostic,
    cross_validate_theta,
    report,
    resolution,
    spe,
)
from .emulator import (
    AdjustedEmulator,
    Prediction,
    Surface,
    adjust,
    fit_emulator,
    load_emulator,
    oracle_adjust,
    predict,
    predict_batch,
    predict_grid,
    save_emulator,
)
from .errors import (
    ConfigError,
    DataError,
    EmulatorError,
    InsufficientDataError,
    NotPositiveDefiniteError,
    NumericalError,
    SingularDesignError,
)
from .regression import BasisSpec, OlsFit, PriorBeliefs, design_matrix, elicit_prior, ols_fit
from .synthetic import ScenarioSpec, generate_grid, monotone_yield, step_yield
