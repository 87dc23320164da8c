"""Reference estimators of the mean with their usual standard errors."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import BoundaryMaximum, EmptySample, InferenceError
from .rng import as_seed_sequence, child_generator
from .tail import BetaGammaPrior, map_fit
from .threshold import select_threshold, threshold_scan

__all__ = ["Baseline", "EstimateWithSe", "naive_mean", "winsorized_mean", "subsampling_se"]


class Baseline(str, enum.Enum):
    NAIVE = "naive"
    WINSORIZED = "winsorized"
    SUBSAMPLING = "subsampling"


@dataclass(frozen=True)
class EstimateWithSe:
    estimate: float
    se: float
    method: Baseline
    rate: float | None = None
    fallback: bool = False


def _mean_se(z):
    return float(z.mean()), float(z.std(ddof=1) / np.sqrt(z.size))


def naive_mean(values) -> EstimateWithSe:
    z = np.asarray(values, dtype=float).ravel()
    if z.size < 2:
        raise EmptySample("need at least two values")
    return EstimateWithSe(*_mean_se(z), Baseline.NAIVE)


def winsorized_mean(values, u: float) -> EstimateWithSe:
    """Clip values strictly above ``u`` to ``u``; ties are left alone."""
    z = np.asarray(values, dtype=float).ravel()
    if z.size < 2:
        raise EmptySample("need at least two values")
    return EstimateWithSe(*_mean_se(np.minimum(z, u)), Baseline.WINSORIZED)


def subsampling_se(values, seed=None, num_subsamples: int = 200, threshold: float | None = None,
                   prior: BetaGammaPrior | None = None, fpc: bool = True) -> EstimateWithSe:
    """Half-sample subsampling standard error with a tail-adjusted rate.

    The spread of means over ``num_subsamples`` without-replacement
    subsamples of size ``b = N // 2`` is rescaled by ``(b / N) ** beta``,
    ``beta = min(0.5, 1 - xi_hat)``.  ``xi_hat`` is fit at ``threshold``,
    or at the rule-selected threshold when none is given; if that fit fails
    ``beta = 0.5`` and ``fallback`` is set.  With ``fpc`` the spread is
    first divided by ``sqrt(1 - b / N)`` to undo the finite-population
    shrinkage of half-samples.
    """
    z = np.asarray(values, dtype=float).ravel()
    N = z.size
    if N < 10:
        raise EmptySample("subsampling needs at least 10 values")
    if num_subsamples < 50:
        raise ValueError("need at least 50 subsamples")
    prior = prior or BetaGammaPrior()
    fallback = False
    try:
        if threshold is None:
            threshold = select_threshold(threshold_scan(z, prior=prior)).u
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", BoundaryMaximum)
            xi = map_fit(prior, z[z >= threshold] - threshold).xi
        beta = min(0.5, 1.0 - xi)
    except (InferenceError, ValueError):
        beta, fallback = 0.5, True
    b = N // 2
    ss = as_seed_sequence(seed)
    means = np.array([
        z[child_generator(ss, k).choice(N, size=b, replace=False)].mean() for k in range(num_subsamples)
    ])
    spread = means.std(ddof=1)
    if fpc:
        spread /= np.sqrt(1.0 - b / N)
    return EstimateWithSe(float(z.mean()), float(spread * (b / N) ** beta), Baseline.SUBSAMPLING, beta, fallback)
