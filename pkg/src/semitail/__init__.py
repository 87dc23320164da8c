"""Semiparametric Bayesian inference for means of heavy-tailed data.

The bulk of the data gets a Bayesian bootstrap and the exceedances over a
threshold a generalized Pareto tail, which keeps posterior uncertainty for
the mean honest when the tail index is near or above one half.
"""

__version__ = "0.1.0"

from .baselines import Baseline, EstimateWithSe, naive_mean, subsampling_se, winsorized_mean
from .errors import (
    BoundaryMaximum,
    DegenerateCurvature,
    DegenerateMoments,
    EmptyGrid,
    EmptySample,
    InferenceError,
    NoValidDiagnostics,
    TooFewExceedances,
    ZeroVariance,
)
from .gpd import GpdParams, gpd_cdf, gpd_log_pdf, gpd_mean, gpd_quantile, gpd_sample
from .mean import (
    MeanPosterior,
    Method,
    SplitSample,
    TreatmentEffect,
    mc_mean_oracle,
    posterior_mean_moments,
    semiparametric_bootstrap,
    semiparametric_mean,
    split_sample,
    treatment_effect,
)
from .study import (
    SimConfig,
    StudyResult,
    block_prior,
    run_simulation_study,
    run_subsample_validation,
    simulate_dgp,
)
from .tail import (
    BetaGammaPrior,
    ExceedanceSample,
    LaplaceFit,
    PosteriorDraws,
    fit_beta_prior,
    imh_sample,
    laplace_lambda,
    log_posterior,
    map_fit,
    parametric_bootstrap,
)
from .threshold import (
    ThresholdChoice,
    ThresholdDiagnostic,
    johansson_variance,
    quantile_grid,
    select_threshold,
    threshold_scan,
)
