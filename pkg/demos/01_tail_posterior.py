"""
Fitting a heavy tail
====================

Draw exceedances from a generalized Pareto distribution, find the
posterior mode, and compare two summaries of the mean exceedance
lambda: the Laplace approximation and the bootstrap iMH chain.
"""

import numpy as np

from semitail import BetaGammaPrior, GpdParams, gpd_sample, imh_sample, laplace_lambda, map_fit

# 2,000 exceedances with tail index 0.6: finite mean, infinite variance
truth = GpdParams(xi=0.6, sigma=10.0)
v = gpd_sample(truth, 2000, rng=1)
print(f"true lambda = {truth.mean:.2f}, sample mean exceedance = {v.mean():.2f}")

# reference prior: flat on xi, 1/sigma on the scale
prior = BetaGammaPrior()
mode = map_fit(prior, v)
print(f"MAP: xi = {mode.xi:.3f}, sigma = {mode.sigma:.3f}")

# Laplace is essentially free
fit = laplace_lambda(prior, v, mode)
print(f"Laplace: lambda = {fit.lambda_hat:.2f} +/- {np.sqrt(fit.variance):.2f}")

# the iMH chain costs one MAP refit per draw
post = imh_sample(prior, v, B=400, seed=2)
print(f"iMH:     lambda = {post.lambda_mean:.2f} +/- {np.sqrt(post.lambda_variance):.2f}"
      f"  (acceptance {post.acceptance_rate:.0%})")

# an informative prior on xi pulls the fit toward its centre
tight = BetaGammaPrior(a=80, b=80)
print(f"Beta(80, 80) prior: xi_hat = {map_fit(tight, v).xi:.3f}")
