"""Generalized Pareto distribution for exceedances over a threshold.

Only the heavy-tailed, finite-mean regime ``0 < xi < 1`` is supported.
Powers of ``1 + xi * v / sigma`` are always evaluated through ``log1p`` so
that small tail indices do not lose precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import as_generator

__all__ = [
    "GpdParams",
    "gpd_log_pdf",
    "gpd_cdf",
    "gpd_quantile",
    "gpd_sample",
    "gpd_mean",
]


@dataclass(frozen=True)
class GpdParams:
    """Tail index ``xi`` in (0, 1) and scale ``sigma`` > 0."""

    xi: float
    sigma: float

    def __post_init__(self):
        xi, sigma = float(self.xi), float(self.sigma)
        if not (0.0 < xi < 1.0):
            raise ValueError(f"xi must lie in (0, 1), got {xi!r}")
        if not (sigma > 0.0 and np.isfinite(sigma)):
            raise ValueError(f"sigma must be positive and finite, got {sigma!r}")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "sigma", sigma)

    @property
    def mean(self) -> float:
        return gpd_mean(self)


def _check_exceedances(v):
    v = np.asarray(v, dtype=float)
    if np.any(v < 0) or np.any(np.isnan(v)):
        raise ValueError("exceedances must be nonnegative")
    return v


def gpd_log_pdf(params: GpdParams, v):
    """Log density ``-log(sigma) - (1/xi + 1) * log1p(xi * v / sigma)``."""
    v = _check_exceedances(v)
    xi, sigma = params.xi, params.sigma
    out = -np.log(sigma) - (1.0 / xi + 1.0) * np.log1p(xi * v / sigma)
    return out if out.ndim else float(out)


def gpd_cdf(params: GpdParams, v):
    v = _check_exceedances(v)
    xi, sigma = params.xi, params.sigma
    out = -np.expm1(-np.log1p(xi * v / sigma) / xi)
    return out if out.ndim else float(out)


def gpd_quantile(params: GpdParams, p):
    """Inverse CDF, ``(sigma / xi) * ((1 - p)^(-xi) - 1)``.

    Raises:
        ValueError: if any ``p`` lies outside ``[0, 1)``.
    """
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or np.any(p >= 1) or np.any(np.isnan(p)):
        raise ValueError("quantile level must lie in [0, 1)")
    xi, sigma = params.xi, params.sigma
    out = (sigma / xi) * np.expm1(-xi * np.log1p(-p))
    return out if out.ndim else float(out)


def gpd_sample(params: GpdParams, count: int, rng=None) -> np.ndarray:
    """Draw ``count`` exceedances by inverting the CDF at uniform variates."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    gen = as_generator(rng)
    u = gen.random(int(count))
    xi, sigma = params.xi, params.sigma
    # -log1p(-u) is a standard exponential; keeps the expansion stable.
    return (sigma / xi) * np.expm1(xi * -np.log1p(-u))


def gpd_mean(params: GpdParams) -> float:
    """Mean exceedance ``sigma / (1 - xi)``."""
    return params.sigma / (1.0 - params.xi)
