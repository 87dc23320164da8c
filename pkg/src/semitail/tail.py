"""Bayesian inference for the GPD tail parameters.

The prior is ``Beta(xi; a, b) * Gamma(sigma; c, d)``; ``c = d = 0`` gives the
improper reference limit ``1 / sigma`` on the scale.  Posterior summaries for
the mean exceedance ``lambda = sigma / (1 - xi)`` come either from a Laplace
approximation at the MAP or from an independence Metropolis-Hastings chain
whose proposal is a kernel-smoothed parametric bootstrap of the MAP.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import expit, logit
from scipy.stats import multivariate_normal

from .errors import (
    BoundaryMaximum,
    DegenerateCurvature,
    DegenerateMoments,
    InferenceError,
    TooFewExceedances,
    ZeroVariance,
)
from .gpd import GpdParams, gpd_sample
from .rng import as_generator, as_seed_sequence, child_generator, child_sequence, parallel_map

__all__ = [
    "BetaGammaPrior",
    "ExceedanceSample",
    "LaplaceFit",
    "PosteriorDraws",
    "ProposalDensity",
    "log_posterior",
    "log_posterior_grid",
    "map_fit",
    "laplace_lambda",
    "lambda_gradient",
    "parametric_bootstrap",
    "fit_proposal",
    "imh_correct",
    "imh_sample",
    "fit_beta_prior",
    "effective_sample_size",
]

# logit(xi) is confined to this box; expit(30) = 1 - 9e-14.
_T_MAX = 30.0
_BOUNDARY_TOL = 1e-4
MAX_REFIT_ATTEMPTS = 10


@dataclass(frozen=True)
class BetaGammaPrior:
    a: float = 1.0
    b: float = 1.0
    c: float = 0.0
    d: float = 0.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("Beta shapes a, b must be positive")
        if not (self.c >= 0 and self.d >= 0):
            raise ValueError("Gamma hyperparameters c, d must be nonnegative")

    @property
    def is_reference(self) -> bool:
        return self.c == 0 and self.d == 0

    @property
    def xi_mean(self) -> float:
        return self.a / (self.a + self.b)

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c, "d": self.d}


@dataclass(frozen=True)
class ExceedanceSample:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if np.any(~np.isfinite(v)) or np.any(v < 0):
            raise ValueError("exceedances must be finite and nonnegative")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size

    def __len__(self):
        return self.values.size


def _as_sample(sample) -> ExceedanceSample:
    return sample if isinstance(sample, ExceedanceSample) else ExceedanceSample(sample)


@dataclass(frozen=True)
class LaplaceFit:
    lambda_hat: float
    variance: float
    q_values: np.ndarray = field(repr=False)
    map: GpdParams | None = None
    fallback: bool = False
    conditional_variance: float | None = None
    marginal: bool = False


@dataclass
class PosteriorDraws:
    draws: list
    acceptance_rate: float
    lambda_mean: float
    lambda_variance: float
    map: GpdParams | None = None

    @property
    def xi(self) -> np.ndarray:
        return np.array([p.xi for p in self.draws])

    @property
    def sigma(self) -> np.ndarray:
        return np.array([p.sigma for p in self.draws])

    @property
    def lambdas(self) -> np.ndarray:
        return self.sigma / (1.0 - self.xi)


# ---------------------------------------------------------------------------
# log posterior


def _log_post_parts(xi, one_minus_xi, sigma, v, prior: BetaGammaPrior):
    """Log posterior for broadcastable parameter arrays against sample ``v``."""
    xi = np.asarray(xi, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    n = v.size
    shape = np.broadcast(xi, sigma).shape
    xi_f, sig_f = np.broadcast_to(xi, shape).ravel(), np.broadcast_to(sigma, shape).ravel()
    s1 = np.empty(xi_f.size)
    # chunk to keep the (params x data) matrix bounded
    step = max(1, 2_000_000 // max(n, 1))
    for i in range(0, xi_f.size, step):
        r = (xi_f[i:i + step] / sig_f[i:i + step])[:, None]
        s1[i:i + step] = np.log1p(r * v[None, :]).sum(axis=1)
    s1 = s1.reshape(shape)
    out = -(1.0 + xi) / xi * s1 + (prior.c - n - 1.0) * np.log(sigma) - prior.d * sigma
    if prior.a != 1:
        out = out + (prior.a - 1.0) * np.log(xi)
    if prior.b != 1:
        out = out + (prior.b - 1.0) * np.log(one_minus_xi)
    return out


def log_posterior(prior: BetaGammaPrior, sample, params: GpdParams) -> float:
    """Unnormalized log posterior ``l(sigma, xi)`` of the GPD tail."""
    v = _as_sample(sample).values
    return float(_log_post_parts(params.xi, 1.0 - params.xi, params.sigma, v, prior))


def log_posterior_grid(prior: BetaGammaPrior, sample, xi, sigma) -> np.ndarray:
    """Vectorized ``l`` over broadcastable arrays of ``xi`` and ``sigma``."""
    v = _as_sample(sample).values
    xi = np.asarray(xi, dtype=float)
    return _log_post_parts(xi, 1.0 - xi, sigma, v, prior)


def _objective(t, v, prior):
    t0 = min(max(t[0], -_T_MAX), _T_MAX)
    xi, omx = expit(t0), expit(-t0)
    val = _log_post_parts(xi, omx, np.exp(t[1]), v, prior)
    val = float(val)
    return -val if np.isfinite(val) else np.inf


def _gradient_t(t, v, prior):
    """Gradient of ``l`` in (logit xi, log sigma) coordinates."""
    xi, omx, sigma = expit(t[0]), expit(-t[0]), np.exp(t[1])
    n = v.size
    xv = xi * v
    w = xv / (sigma + xv)
    sw = w.sum()
    s1 = np.log1p(xv / sigma).sum()
    d_sigma = ((1.0 + xi) / xi * sw + prior.c - n - 1.0) / sigma - prior.d
    d_xi = s1 / xi**2 - (1.0 + xi) / xi**2 * sw + (prior.a - 1.0) / xi - (prior.b - 1.0) / omx
    return np.array([d_xi * xi * omx, d_sigma * sigma])


def _moment_start(v):
    vbar = v.mean()
    s2 = v.var(ddof=1) if v.size > 1 else 0.0
    if vbar <= 0:
        return 0.5, 1e-8
    if s2 <= 0:
        return 0.05, vbar
    ratio = vbar**2 / s2
    xi0 = float(np.clip(0.5 * (1.0 - ratio), 0.05, 0.95))
    sigma0 = 0.5 * vbar * (ratio + 1.0)
    return xi0, sigma0


def _newton_polish(t, v, prior, f, iters=25, tol=1e-8):
    fx = f(t)
    for _ in range(iters):
        g = _gradient_t(t, v, prior)
        if np.linalg.norm(g) < tol:
            break
        h = 1e-5
        H = np.empty((2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            H[:, j] = (_gradient_t(t + e, v, prior) - _gradient_t(t - e, v, prior)) / (2 * h)
        H = 0.5 * (H + H.T)
        try:
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)) or not np.all(np.linalg.eigvalsh(H) < 0):
            break
        # backtrack on the objective
        for scale in (1.0, 0.5, 0.25, 0.125):
            cand = t + scale * step
            fc = f(cand)
            if fc <= fx + 1e-12 * max(1.0, abs(fx)):
                t, fx = cand, fc
                break
        else:
            break
    return t, fx


def map_fit(prior: BetaGammaPrior, sample) -> GpdParams:
    """Posterior mode of ``(xi, sigma)``.

    Nelder-Mead in ``(logit xi, log sigma)`` from a moment-based start and
    from the prior mean, followed by a Newton polish on the analytic
    gradient.  The best local optimum wins.

    Raises:
        TooFewExceedances: fewer than three exceedances under an improper
            scale prior, or no exceedances at all.
    """
    v = _as_sample(sample).values
    n = v.size
    minimum = 3 if (prior.c == 0 or prior.d == 0) else 1
    if n < minimum:
        raise TooFewExceedances(f"need at least {minimum} exceedances, got {n}")

    xi0, sigma0 = _moment_start(v)
    starts = [(xi0, sigma0)]
    sigma_prior = prior.c / prior.d if prior.c > 0 and prior.d > 0 else sigma0
    if abs(prior.xi_mean - xi0) > 1e-6 or abs(sigma_prior - sigma0) > 1e-12 * sigma0:
        starts.append((prior.xi_mean, sigma_prior))

    f = lambda t: _objective(t, v, prior)  # noqa: E731
    best = None
    for x0, s0 in starts:
        t0 = np.array([logit(x0), np.log(s0)])
        res = optimize.minimize(
            f, t0, method="Nelder-Mead",
            options={"xatol": 1e-6, "fatol": 1e-9, "maxiter": 4000,
                     "initial_simplex": t0 + np.array([[0, 0], [0.5, 0], [0, 0.5]])},
        )
        t, fx = res.x, res.fun
        if abs(t[0]) < _T_MAX - 1:
            t, fx = _newton_polish(t, v, prior, f)
        if best is None or fx < best[1]:
            best = (t, fx)
    t, fx = best
    if not np.isfinite(fx):
        raise InferenceError("log posterior is not finite at any candidate")
    t0 = min(max(t[0], -_T_MAX), _T_MAX)
    xi = float(expit(t0))
    sigma = float(np.exp(t[1]))
    if not (sigma > 0 and np.isfinite(sigma)):
        raise InferenceError("scale estimate collapsed")
    if xi < _BOUNDARY_TOL or xi > 1 - _BOUNDARY_TOL:
        warnings.warn(f"MAP tail index {xi:.3g} is at the boundary of (0, 1)", BoundaryMaximum, stacklevel=2)
    return GpdParams(xi, sigma)


# ---------------------------------------------------------------------------
# Laplace approximation for lambda


def _log_post_lambda(lam, xi, v, prior):
    """Log posterior in ``(lambda, xi)`` coordinates, Jacobian included."""
    n = v.size
    omx = 1.0 - xi
    return (
        (prior.a - 1.0) * np.log(xi)
        - prior.d * lam * omx
        - (n - prior.c + 1.0) * np.log(lam)
        - (n - prior.b - prior.c + 1.0) * np.log(omx)
        - (1.0 / xi + 1.0) * np.log1p(xi / omx * v / lam).sum()
    )


def lambda_gradient(prior: BetaGammaPrior, sample, lam: float, xi: float) -> float:
    """Derivative in ``lambda`` of the log posterior at fixed ``xi``.

    ``(1/lambda) [(1/xi + 1) sum(q_i) - n + c - 1] - d (1 - xi)`` with
    ``q_i = xi v_i / ((1 - xi) lambda + xi v_i)``.
    """
    v = _as_sample(sample).values
    q = xi * v / ((1.0 - xi) * lam + xi * v)
    return ((1.0 / xi + 1.0) * q.sum() - v.size + prior.c - 1.0) / lam - prior.d * (1.0 - xi)


def _hessian_lambda_xi(lam, xi, v, prior):
    """Central-difference Hessian of the ``(lambda, xi)`` log posterior."""
    f = lambda a, b: _log_post_lambda(a, b, v, prior)  # noqa: E731
    h1 = 1e-4 * lam
    h2 = 1e-4 * min(xi, 1.0 - xi)
    f0 = f(lam, xi)
    hll = (f(lam + h1, xi) - 2 * f0 + f(lam - h1, xi)) / h1**2
    hxx = (f(lam, xi + h2) - 2 * f0 + f(lam, xi - h2)) / h2**2
    hlx = (f(lam + h1, xi + h2) - f(lam + h1, xi - h2)
           - f(lam - h1, xi + h2) + f(lam - h1, xi - h2)) / (4 * h1 * h2)
    return np.array([[hll, hlx], [hlx, hxx]])


def _marginal_curvature(lam, xi, v, prior, hll=None):
    """Curvature of the lambda-profile, ``H_ll - H_lx^2 / H_xx``."""
    H = _hessian_lambda_xi(lam, xi, v, prior)
    if hll is not None:
        H[0, 0] = hll
    if not (H[1, 1] < 0 and np.all(np.isfinite(H))):
        return np.nan
    return H[0, 0] - H[0, 1] ** 2 / H[1, 1]


def laplace_lambda(prior: BetaGammaPrior, sample, map: GpdParams, marginal: bool = True) -> LaplaceFit:
    """Gaussian approximation to the posterior of ``lambda`` at the MAP.

    The curvature in ``lambda`` at fixed ``xi`` is ``B / lambda^2`` with
    ``B = n - c + 1 + (1/xi + 1) * sum(q_i^2 - 2 q_i)``, giving the
    conditional variance ``-lambda^2 / B``.  With ``marginal=True`` (the
    default) the variance is instead ``-1 / (H_ll - H_lx^2 / H_xx)`` from
    the full Hessian in ``(lambda, xi)``, which accounts for uncertainty in
    ``xi``; the conditional variance is kept on the result.  When ``B >= 0``
    the finite-difference profile curvature is used for both.

    Raises:
        DegenerateCurvature: no negative curvature estimate is available.
    """
    v = _as_sample(sample).values
    n = v.size
    xi, sigma = map.xi, map.sigma
    lam = sigma / (1.0 - xi)
    q = xi * v / ((1.0 - xi) * lam + xi * v)
    bracket = n - prior.c + 1.0 + (1.0 / xi + 1.0) * np.sum(q**2 - 2.0 * q)
    if bracket < 0:
        hll = bracket / lam**2
        conditional = -1.0 / hll
        if not marginal:
            return LaplaceFit(lam, conditional, q, map, conditional_variance=conditional)
        curv = _marginal_curvature(lam, xi, v, prior, hll)
        if np.isfinite(curv) and curv < 0:
            return LaplaceFit(lam, -1.0 / curv, q, map, conditional_variance=conditional, marginal=True)
        return LaplaceFit(lam, conditional, q, map, conditional_variance=conditional)
    curv = _marginal_curvature(lam, xi, v, prior) if n else np.nan
    if np.isfinite(curv) and curv < 0:
        return LaplaceFit(lam, -1.0 / curv, q, map, fallback=True, conditional_variance=-1.0 / curv,
                          marginal=True)
    raise DegenerateCurvature(f"log posterior is not concave in lambda at the MAP (bracket={bracket:.4g})")


# ---------------------------------------------------------------------------
# parametric bootstrap and the kernel proposal


def _bootstrap_replicate(prior, params, n, seed, index):
    last = None
    for attempt in range(MAX_REFIT_ATTEMPTS):
        gen = child_generator(seed, index, attempt)
        v = gpd_sample(params, n, gen)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", BoundaryMaximum)
                return map_fit(prior, v)
        except InferenceError as exc:
            last = exc
    raise InferenceError(f"bootstrap replicate {index} failed {MAX_REFIT_ATTEMPTS} times") from last


def parametric_bootstrap(prior: BetaGammaPrior, map: GpdParams, n: int, B: int, seed=None, threads: int = 1) -> list:
    """Refit the MAP on ``B`` samples of size ``n`` simulated from ``map``."""
    if B < 2:
        raise ValueError("need at least two bootstrap replicates")
    if n < 3:
        raise TooFewExceedances("parametric bootstrap needs n >= 3")
    ss = as_seed_sequence(seed)
    return parallel_map(lambda i: _bootstrap_replicate(prior, map, n, ss, i), range(B), threads)


def _to_transformed(draws) -> np.ndarray:
    xi = np.array([p.xi for p in draws])
    sigma = np.array([p.sigma for p in draws])
    return np.column_stack([logit(xi), np.log(sigma)])


@dataclass
class ProposalDensity:
    """Gaussian product-kernel density on (logit xi, log sigma).

    An optional defensive component, a Gaussian with weight
    ``defensive_weight`` at ``defensive_mean`` with covariance
    ``defensive_cov``, keeps the tails of the mixture from being lighter
    than the posterior's.
    """

    centers: np.ndarray
    bandwidths: np.ndarray
    defensive_weight: float = 0.0
    defensive_mean: np.ndarray | None = None
    defensive_cov: np.ndarray | None = None

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        self.bandwidths = np.asarray(self.bandwidths, dtype=float)
        if np.any(self.bandwidths <= 0):
            raise ValueError("bandwidths must be positive")
        if not 0 <= self.defensive_weight < 1:
            raise ValueError("defensive weight must lie in [0, 1)")

    def _kde_logpdf(self, pts):
        k = len(self.centers)
        h = self.bandwidths
        out = np.empty(len(pts))
        norm = -np.log(k) - np.sum(np.log(h)) - np.log(2 * np.pi)
        step = max(1, 4_000_000 // k)
        for i in range(0, len(pts), step):
            z = (pts[i:i + step, None, :] - self.centers[None, :, :]) / h
            e = -0.5 * np.sum(z**2, axis=2)
            mx = e.max(axis=1, keepdims=True)
            out[i:i + step] = mx[:, 0] + np.log(np.exp(e - mx).sum(axis=1)) + norm
        return out

    def logpdf(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        kde = self._kde_logpdf(pts)
        if self.defensive_weight == 0:
            return kde
        w = self.defensive_weight
        wide = multivariate_normal(self.defensive_mean, self.defensive_cov).logpdf(pts)
        return np.logaddexp(np.log1p(-w) + kde, np.log(w) + np.atleast_1d(wide))

    def sample(self, count: int, rng=None) -> np.ndarray:
        gen = as_generator(rng)
        idx = gen.integers(len(self.centers), size=count)
        out = self.centers[idx] + gen.standard_normal((count, 2)) * self.bandwidths
        if self.defensive_weight > 0:
            wide = gen.random(count) < self.defensive_weight
            out[wide] = gen.multivariate_normal(self.defensive_mean, self.defensive_cov, int(wide.sum()))
        return out


def fit_proposal(draws, defensive: float = 0.0, defensive_scale: float = 2.0) -> ProposalDensity:
    """Scott's-rule product-kernel density of bootstrap draws.

    ``h_j = s_j * B^(-1/6)`` per transformed coordinate.  A nonzero
    ``defensive`` weight mixes in a Gaussian at the draws' mean with
    covariance inflated by ``defensive_scale**2``.

    Raises:
        ZeroVariance: a coordinate is constant across draws.
    """
    pts = np.atleast_2d(draws) if isinstance(draws, np.ndarray) else _to_transformed(draws)
    if len(pts) < 2:
        raise ValueError("need at least two draws")
    s = pts.std(axis=0, ddof=1)
    if np.any(s <= 0) or np.any(~np.isfinite(s)):
        raise ZeroVariance("bootstrap draws are constant in at least one coordinate")
    bw = s * len(pts) ** (-1.0 / 6.0)
    if defensive == 0:
        return ProposalDensity(pts, bw)
    cov = np.cov(pts.T) * defensive_scale**2 + np.diag(bw**2)
    return ProposalDensity(pts, bw, defensive, pts.mean(axis=0), cov)


# ---------------------------------------------------------------------------
# independence Metropolis-Hastings


def imh_correct(log_target, log_proposal, rng=None):
    """Run the independence MH correction over a precomputed proposal list.

    Position ``b`` keeps its proposal with probability
    ``min(1, [r(prev) pi(b)] / [r(b) pi(prev)])`` and otherwise repeats the
    previous state.  Returns the index of the retained state for every
    position and the acceptance rate over positions ``1 .. B-1``.
    """
    lt = np.asarray(log_target, dtype=float)
    lp = np.asarray(log_proposal, dtype=float)
    B = lt.size
    gen = as_generator(rng)
    logu = np.log(gen.random(B))
    w = lt - lp
    state = np.empty(B, dtype=int)
    state[0] = cur = 0
    accepted = 0
    for b in range(1, B):
        if logu[b] < w[b] - w[cur]:
            cur = b
            accepted += 1
        state[b] = cur
    return state, accepted / (B - 1) if B > 1 else 1.0


def imh_sample(prior: BetaGammaPrior, sample, B: int = 1000, seed=None, threads: int = 1,
               defensive: float = 0.1, smooth: bool = True) -> PosteriorDraws:
    """Bootstrap independence Metropolis-Hastings posterior sampler.

    Fits the MAP, refits it on ``B`` parametric-bootstrap samples, smooths
    the replicates into a proposal density ``r`` and runs the MH correction
    against the posterior, with both densities taken on the
    ``(logit xi, log sigma)`` plane.  With ``smooth=True`` the ``B``
    proposals are fresh draws from ``r``, so the correction is exact; with
    ``smooth=False`` the raw replicates are proposed.
    """
    s = _as_sample(sample)
    if B < 100:
        raise ValueError("imh_sample needs B >= 100")
    ss = as_seed_sequence(seed)
    mode = map_fit(prior, s)
    boot = parametric_bootstrap(prior, mode, s.n, B, child_sequence(ss, 0), threads)
    proposal = fit_proposal(boot, defensive if smooth else 0.0)
    gen = child_generator(ss, 1)
    pts = proposal.sample(B, gen) if smooth else proposal.centers.copy()
    pts[:, 0] = np.clip(pts[:, 0], -_T_MAX, _T_MAX)
    xi, omx, sigma = expit(pts[:, 0]), expit(-pts[:, 0]), np.exp(pts[:, 1])
    # target density on the transformed plane carries the log-Jacobian
    lt = _log_post_parts(xi, omx, sigma, s.values, prior) + np.log(xi) + np.log(omx) + pts[:, 1]
    lp = proposal.logpdf(pts)
    state, rate = imh_correct(lt, lp, gen)
    xi_c, sig_c = xi[state], sigma[state]
    draws = [GpdParams(x, sg) for x, sg in zip(xi_c, sig_c)]
    lam = sig_c / omx[state]
    return PosteriorDraws(draws, rate, float(lam.mean()), float(lam.var(ddof=1)), mode)


# ---------------------------------------------------------------------------
# informative priors


def fit_beta_prior(xi_estimates) -> BetaGammaPrior:
    """Moment-matched ``Beta(a, b)`` for a collection of tail indices.

    Raises:
        DegenerateMoments: the sample variance is too large for any Beta.
    """
    x = np.asarray(xi_estimates, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two estimates")
    if np.any(x <= 0) or np.any(x >= 1):
        raise ValueError("estimates must lie strictly inside (0, 1)")
    m, s2 = x.mean(), x.var(ddof=1)
    if s2 <= 0:
        raise DegenerateMoments("estimates have zero variance")
    k = m * (1 - m) / s2 - 1.0
    if k <= 0:
        raise DegenerateMoments(f"variance {s2:.4g} too large for mean {m:.4g}")
    return BetaGammaPrior(float(m * k), float((1 - m) * k), 0.0, 0.0)


def effective_sample_size(x) -> float:
    """Autocorrelation ESS with Geyer's initial monotone sequence."""
    x = np.asarray(x, dtype=float)
    n = x.size
    xc = x - x.mean()
    var = xc @ xc / n
    if var == 0:
        return float(n)
    f = np.fft.rfft(xc, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (n * var)
    tau = -1.0
    prev = np.inf
    for k in range(0, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0:
            break
        pair = min(pair, prev)
        tau += 2 * pair
        prev = pair
    return float(n / max(tau, 1e-12))
