"""Posterior inference for the mean of a semiparametric DGP.

Below the threshold ``u`` the DGP is a Bayesian bootstrap on the observed
points; above it, exceedances follow a GPD whose mean exceedance
``lambda`` carries its own posterior.  The posterior mean of the DGP is a
Dirichlet-weighted average of the bulk points and ``u + lambda``.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import BoundaryMaximum, EmptySample, InferenceError, TooFewExceedances
from .gpd import GpdParams, gpd_sample
from .rng import as_generator, as_seed_sequence, child_generator, parallel_map
from .tail import (
    MAX_REFIT_ATTEMPTS,
    BetaGammaPrior,
    ExceedanceSample,
    imh_sample,
    laplace_lambda,
    map_fit,
)

__all__ = [
    "Method",
    "SplitSample",
    "MeanPosterior",
    "DirichletWeights",
    "TreatmentEffect",
    "BootstrapReplicate",
    "split_sample",
    "lambda_variance_coefficient",
    "posterior_mean_moments",
    "draw_dirichlet_weights",
    "mc_mean_oracle",
    "semiparametric_bootstrap",
    "semiparametric_mean",
    "treatment_effect",
]


class Method(str, enum.Enum):
    LAPLACE = "laplace"
    IMH = "imh"
    BULK_ONLY = "bulk-only"


@dataclass(frozen=True)
class SplitSample:
    bulk: np.ndarray
    exceedances: ExceedanceSample
    u: float

    @property
    def m(self) -> int:
        return self.bulk.size

    @property
    def n(self) -> int:
        return self.exceedances.n

    @property
    def N(self) -> int:
        return self.m + self.n


@dataclass(frozen=True)
class MeanPosterior:
    mean: float
    variance: float
    lambda_mean: float
    lambda_variance: float
    method: Method
    u: float | None = None
    m: int = 0
    n: int = 0
    xi_hat: float | None = None
    sigma_hat: float | None = None
    acceptance_rate: float | None = None

    @property
    def sd(self) -> float:
        return float(np.sqrt(self.variance))


@dataclass(frozen=True)
class DirichletWeights:
    theta: np.ndarray

    @property
    def total(self) -> float:
        return float(self.theta.sum())


@dataclass(frozen=True)
class TreatmentEffect:
    gamma: float
    sd: float


@dataclass(frozen=True)
class BootstrapReplicate:
    m_b: int
    n_b: int
    mu_hat: float
    lambda_hat: float


def split_sample(values, u: float) -> SplitSample:
    """Partition at ``u``; points equal to ``u`` go to the tail with exceedance 0."""
    z = np.asarray(values, dtype=float).ravel()
    tail = z >= u
    return SplitSample(z[~tail], ExceedanceSample(z[tail] - u), float(u))


def lambda_variance_coefficient(m: int, n: int, form: str = "exact") -> float:
    """Multiplier of ``var(lambda)`` in the posterior variance of the mean.

    ``form="exact"`` is the law-of-total-variance value for Dirichlet
    weights ``(1, ..., 1, n)`` with an independent tail mean,
    ``n (m + n (N + 1)) / (N^2 (N + 1))``.  ``form="closed"`` is the
    closed form ``2 n^2 (N - 0.5) / (N^2 (N + 1))``, which counts the
    ``lambda`` term roughly twice when the tail is a small fraction of the
    data.
    """
    N = m + n
    if form == "exact":
        return n * (m + n * (N + 1.0)) / (N**2 * (N + 1.0))
    if form == "closed":
        return 2.0 * n**2 * (N - 0.5) / (N**2 * (N + 1.0))
    raise ValueError(f"unknown variance form {form!r}")


def posterior_mean_moments(split: SplitSample, lambda_mean=None, lambda_variance=None,
                           method: Method | str = Method.LAPLACE, form: str = "exact") -> MeanPosterior:
    """Posterior mean and variance of the DGP mean given ``lambda`` moments.

    Raises:
        EmptySample: the split holds no observations.
    """
    m, n, N, u = split.m, split.n, split.N, split.u
    z = split.bulk
    if N == 0:
        raise EmptySample("no observations")
    if n == 0:
        mean = z.mean()
        var = np.sum((z - mean) ** 2) / (m * (m + 1.0))
        return MeanPosterior(float(mean), float(var), 0.0, 0.0, Method.BULK_ONLY, u, m, 0)
    if lambda_mean is None or lambda_variance is None:
        raise ValueError("lambda moments are required when the tail is nonempty")
    if lambda_variance < 0:
        raise ValueError("lambda variance must be nonnegative")
    tail_point = u + lambda_mean
    mean = (z.sum() + n * tail_point) / N
    spread = np.sum((z - mean) ** 2) + n * (tail_point - mean) ** 2
    var = spread / (N * (N + 1.0)) + lambda_variance_coefficient(m, n, form) * lambda_variance
    return MeanPosterior(float(mean), float(var), float(lambda_mean), float(lambda_variance),
                         Method(method), u, m, n)


def draw_dirichlet_weights(m: int, n: int, rng=None) -> DirichletWeights:
    """Unnormalized weights: ``Exp(1)`` per bulk point, ``Gamma(n, 1)`` for the tail."""
    gen = as_generator(rng)
    return DirichletWeights(np.append(gen.standard_exponential(m), gen.standard_gamma(n)))


def mc_mean_oracle(split: SplitSample, lambda_draws, R: int = 100_000, seed=None, chunk: int = 2_000):
    """Monte Carlo mean and variance of the DGP mean.

    Each replication draws Dirichlet weights and pairs them with the
    lambda draws in cyclic order.
    """
    if R < 10_000:
        raise ValueError("the oracle needs R >= 10_000")
    if split.n < 1:
        raise ValueError("the oracle needs a nonempty tail")
    lam = np.asarray(lambda_draws, dtype=float)
    gen = as_generator(seed)
    m, n, z, u = split.m, split.n, split.bulk, split.u
    mu = np.empty(R)
    lam_cycle = lam[np.arange(R) % lam.size]
    for i in range(0, R, chunk):
        k = min(chunk, R - i)
        th = gen.standard_exponential((k, m))
        tt = gen.standard_gamma(n, size=k)
        mu[i:i + k] = (th @ z + tt * (u + lam_cycle[i:i + k])) / (th.sum(axis=1) + tt)
    return float(mu.mean()), float(mu.var(ddof=1))


def _fit_lambda(prior, v):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryMaximum)
        p = map_fit(prior, v)
    return p.sigma / (1.0 - p.xi)


def _semiparam_replicate(split, prior, params, seed, b):
    N = split.N
    last = None
    for attempt in range(MAX_REFIT_ATTEMPTS):
        gen = child_generator(seed, b, attempt)
        m_b = int(gen.binomial(N, split.m / N))
        n_b = N - m_b
        bulk_sum = split.bulk[gen.integers(split.m, size=m_b)].sum() if split.m else 0.0
        v = gpd_sample(params, n_b, gen)
        try:
            lam = _fit_lambda(prior, v)
        except InferenceError as exc:
            last = exc
            continue
        return BootstrapReplicate(m_b, n_b, float((bulk_sum + n_b * (split.u + lam)) / N), float(lam))
    raise InferenceError(f"semiparametric replicate {b} failed {MAX_REFIT_ATTEMPTS} times") from last


def semiparametric_bootstrap(split: SplitSample, prior: BetaGammaPrior, B: int = 1000, seed=None,
                             threads: int = 1) -> list:
    """Frequentist bootstrap: resample the bulk, simulate the tail from the MAP."""
    if split.n < 3:
        raise TooFewExceedances("semiparametric bootstrap needs n >= 3")
    if B < 100:
        raise ValueError("semiparametric bootstrap needs B >= 100")
    params = map_fit(prior, split.exceedances)
    ss = as_seed_sequence(seed)
    return parallel_map(lambda b: _semiparam_replicate(split, prior, params, ss, b), range(B), threads)


def semiparametric_mean(values, u: float, prior: BetaGammaPrior | None = None,
                        method: Method | str = "laplace", draws: int = 1000, seed=None,
                        threads: int = 1, form: str = "exact") -> MeanPosterior:
    """Split at ``u``, fit the tail, and return the posterior of the DGP mean."""
    prior = prior or BetaGammaPrior()
    method = Method(method)
    split = split_sample(values, u)
    if split.n == 0:
        return posterior_mean_moments(split)
    if method is Method.IMH:
        post = imh_sample(prior, split.exceedances, draws, seed=seed, threads=threads)
        out = posterior_mean_moments(split, post.lambda_mean, post.lambda_variance, method, form)
        return _with_tail(out, post.map, post.acceptance_rate)
    params = map_fit(prior, split.exceedances)
    fit = laplace_lambda(prior, split.exceedances, params)
    out = posterior_mean_moments(split, fit.lambda_hat, fit.variance, Method.LAPLACE, form)
    return _with_tail(out, params, None)


def _with_tail(post: MeanPosterior, params: GpdParams, rate) -> MeanPosterior:
    return replace(post, xi_hat=params.xi, sigma_hat=params.sigma, acceptance_rate=rate)


def treatment_effect(post1: MeanPosterior, post0: MeanPosterior) -> TreatmentEffect:
    """Difference of independent group means; variances add."""
    return TreatmentEffect(post1.mean - post0.mean, float(np.sqrt(post1.variance + post0.variance)))
