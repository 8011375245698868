"""Cholesky factorisation with an escalating diagonal jitter."""

from __future__ import annotations

import logging

import numpy as np
from scipy.linalg import LinAlgError, cholesky

from .errors import NotPositiveDefiniteError

logger = logging.getLogger(__name__)

MAX_NUGGET = 1e-4
FIRST_ESCALATION = 1e-8


def nugget_schedule(nugget: float, max_nugget: float = MAX_NUGGET) -> list[float]:
    """The requested nugget, then decades upward, never exceeding ``max_nugget``.

    A zero request escalates from 1e-8.
    """
    out = [float(nugget)]
    base = nugget if nugget > 0 else FIRST_ESCALATION / 10
    k = 1
    while base * 10**k <= max_nugget * (1 + 1e-9):
        out.append(base * 10**k)
        k += 1
    return out


def jittered_cholesky(K: np.ndarray, scale: float, nugget: float, max_nugget: float = MAX_NUGGET):
    """Lower Cholesky factor of ``K + nugget * scale * I``.

    On failure the nugget is raised tenfold until ``max_nugget``; the nugget
    that succeeded is returned with the factor.

    Returns
    -------
    L : ndarray
    nugget_used : float
    """
    K = 0.5 * (K + K.T)
    eye = np.eye(len(K))
    tried = None
    for nug in nugget_schedule(nugget, max_nugget):
        tried = nug
        try:
            L = cholesky(K + (nug * scale) * eye, lower=True, check_finite=False)
        except LinAlgError:
            logger.debug("cholesky failed at nugget %.1e", nug)
            continue
        if np.all(np.isfinite(L)):
            if nug != nugget:
                logger.info("covariance factorised after raising nugget from %.1e to %.1e", nugget, nug)
            return L, nug
    raise NotPositiveDefiniteError(
        f"covariance matrix is not positive definite even with jitter fraction {tried:.1e}", tried
    )
