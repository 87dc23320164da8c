"""Threshold diagnostics.

Along a valid sequence of thresholds the exceedance scale grows like
``sigma = xi * u``, so the fitted ratio ``sigma_hat / (xi_hat * u)`` should
settle near one.  The selection rule takes the first grid point where the
ratio is near one and still increasing.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import BoundaryMaximum, EmptyGrid, InferenceError, NoValidDiagnostics
from .rng import parallel_map
from .tail import BetaGammaPrior, map_fit

__all__ = [
    "DEFAULT_LEVELS",
    "ThresholdDiagnostic",
    "ThresholdChoice",
    "quantile_grid",
    "threshold_scan",
    "select_threshold",
    "johansson_variance",
]

DEFAULT_LEVELS = (0.90, 0.925, 0.95, 0.975, 0.99, 0.995, 0.999)
RATIO_TOLERANCE = 0.15
BOUNDARY_TOL = 1e-4


@dataclass(frozen=True)
class ThresholdDiagnostic:
    u: float
    n: int
    xi_hat: float | None = None
    sigma_hat: float | None = None
    error: str | None = None

    @property
    def valid(self) -> bool:
        return self.xi_hat is not None

    @property
    def boundary(self) -> bool:
        """Fit pinned against xi = 0 or xi = 1."""
        return self.valid and not (BOUNDARY_TOL <= self.xi_hat <= 1 - BOUNDARY_TOL)

    @property
    def ratio(self) -> float:
        if not self.valid:
            return math.nan
        return self.sigma_hat / (self.xi_hat * self.u)

    @property
    def q_n(self) -> float:
        return johansson_variance(self) if self.valid else math.nan

    def to_dict(self) -> dict:
        return {
            "u": self.u, "n": self.n, "xi_hat": self.xi_hat, "sigma_hat": self.sigma_hat,
            "ratio": None if not self.valid else self.ratio,
            "q_n": None if not self.valid else self.q_n,
            "boundary": self.boundary, "error": self.error,
        }


@dataclass(frozen=True)
class ThresholdChoice:
    u: float
    index: int
    low_confidence: bool


def quantile_grid(values, levels=DEFAULT_LEVELS) -> np.ndarray:
    """Thresholds at empirical quantiles of the positive values."""
    z = np.asarray(values, dtype=float)
    z = z[z > 0]
    if z.size == 0:
        raise EmptyGrid("no positive values to build a grid from")
    return np.unique(np.quantile(z, levels))


def _diagnose(z, u, prior):
    v = z[z >= u] - u
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", BoundaryMaximum)
            p = map_fit(prior, v)
    except InferenceError as exc:
        return ThresholdDiagnostic(float(u), int(v.size), error=type(exc).__name__)
    return ThresholdDiagnostic(float(u), int(v.size), p.xi, p.sigma)


def threshold_scan(values, grid=None, prior: BetaGammaPrior | None = None, threads: int = 1) -> list:
    """Fit the tail at every grid threshold.

    Failed fits produce diagnostics with ``valid == False`` rather than
    aborting the scan.
    """
    z = np.sort(np.asarray(values, dtype=float).ravel())
    grid = quantile_grid(z) if grid is None else np.asarray(grid, dtype=float).ravel()
    if grid.size == 0:
        raise EmptyGrid("threshold grid is empty")
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be positive and strictly increasing")
    prior = prior or BetaGammaPrior()
    return parallel_map(lambda u: _diagnose(z, u, prior), grid, threads)


def select_threshold(diagnostics, tolerance: float = RATIO_TOLERANCE) -> ThresholdChoice:
    """First grid point with ``|ratio - 1| <= tolerance`` and a rising ratio.

    Fits pinned at the boundary of the tail-index range are skipped.  Falls
    back to the ratio closest to one, flagged ``low_confidence``.
    """
    valid = [(i, d) for i, d in enumerate(diagnostics)
             if d.valid and not d.boundary and np.isfinite(d.ratio)]
    if len(valid) < 2:
        raise NoValidDiagnostics(f"need at least two valid diagnostics, got {len(valid)}")
    for (i, d), (_, nxt) in zip(valid, valid[1:]):
        if abs(d.ratio - 1.0) <= tolerance and nxt.ratio > d.ratio:
            return ThresholdChoice(d.u, i, False)
    i, d = min(valid, key=lambda item: abs(item[1].ratio - 1.0))
    return ThresholdChoice(d.u, i, True)


def johansson_variance(diag) -> float:
    """Asymptotic variance of ``sqrt(n) * (lambda_hat - lambda)``.

    ``sigma^2 (1 + xi)(1 - xi + 2 xi^2) / (1 - xi)^4``; the standard error
    of ``lambda_hat`` is ``sqrt(q_n / n)``.
    """
    xi, sigma = diag.xi_hat, diag.sigma_hat
    if xi is None or not xi < 1:
        raise ValueError("a valid fit with xi < 1 is required")
    return sigma**2 * (1 + xi) * (1 - xi + 2 * xi**2) / (1 - xi) ** 4
