"""Command-line interface: ``semitail {fit,ab,scan,simulate,validate}``.

Exit codes: 0 success, 2 input error, 3 inference error, 4 configuration
error.  Failures print a JSON error report on stdout and a one-line
message on stderr.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import naive_mean, winsorized_mean
from .errors import BoundaryMaximum, InferenceError, NoValidDiagnostics, TooFewExceedances
from .mean import MeanPosterior, Method, semiparametric_mean, split_sample, treatment_effect
from .report import (
    AbReport,
    AnalysisReport,
    ErrorReport,
    Estimate,
    InputDigest,
    TailSummary,
    ThresholdInfo,
    jsonable,
    report_to_csv,
    scan_to_csv,
    to_json,
)
from .study import (
    METHODS,
    SIM_LEVELS,
    SemiparametricEstimator,
    SimConfig,
    block_prior,
    get_method,
    run_simulation_study,
    run_subsample_validation,
    simulate_dgp,
)
from .tail import BetaGammaPrior, fit_beta_prior
from .threshold import DEFAULT_LEVELS, RATIO_TOLERANCE, quantile_grid, select_threshold, threshold_scan

EXIT_OK, EXIT_INPUT, EXIT_INFERENCE, EXIT_CONFIG = 0, 2, 3, 4


class InputError(Exception):
    """Unreadable or malformed input data."""


class ConfigError(Exception):
    """Invalid flag values or flag combinations."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# ---------------------------------------------------------------------------
# input


def read_values(path, min_positive: int = 4) -> np.ndarray:
    """One number per line; a single non-numeric first line is a header.

    Blank lines are ignored.  Values at or below zero are kept.
    """
    try:
        lines = Path(path).read_text().splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    out = []
    seen_first = False
    for lineno, line in enumerate(lines, 1):
        s = line.strip()
        if not s:
            continue
        try:
            x = float(s)
        except ValueError:
            if not seen_first:
                seen_first = True
                continue
            raise InputError(f"{path}:{lineno}: not a number: {s!r}") from None
        seen_first = True
        if not math.isfinite(x):
            raise InputError(f"{path}:{lineno}: non-finite value {s!r}")
        out.append(x)
    z = np.array(out, dtype=float)
    if np.count_nonzero(z > 0) < min_positive:
        raise InputError(f"{path}: need at least {min_positive} positive values, got {np.count_nonzero(z > 0)}")
    return z


def _floats(text, flag, count=None):
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"{flag}: expected comma-separated numbers, got {text!r}") from None
    if count is not None and len(vals) != count:
        raise ConfigError(f"{flag}: expected {count} values, got {len(vals)}")
    if not vals:
        raise ConfigError(f"{flag}: no values given")
    return vals


def build_prior(args) -> tuple[BetaGammaPrior, str]:
    a, b = _floats(args.prior_xi, "--prior-xi", 2)
    c, d = _floats(args.prior_sigma, "--prior-sigma", 2)
    source = "flags"
    if args.prior_from_estimates:
        est = read_values(args.prior_from_estimates, min_positive=2)
        try:
            fitted = fit_beta_prior(est)
        except ValueError as exc:
            raise InputError(f"{args.prior_from_estimates}: {exc}") from exc
        a, b, source = fitted.a, fitted.b, "estimates"
    try:
        return BetaGammaPrior(a, b, c, d), source
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _prior_dict(prior, source):
    return {"a": float(prior.a), "b": float(prior.b), "c": float(prior.c), "d": float(prior.d), "source": source}


def _grid(args, values):
    if getattr(args, "grid", None):
        return np.array(_floats(args.grid, "--grid"))
    levels = _floats(args.levels, "--levels") if getattr(args, "levels", None) else DEFAULT_LEVELS
    if any(not 0 < q < 1 for q in levels):
        raise ConfigError("--levels must lie in (0, 1)")
    return quantile_grid(values, levels)


def _diag_rows(diags, selected=None):
    rows = []
    for i, d in enumerate(diags):
        r = d.to_dict()
        r["index"] = i
        r["selected"] = i == selected
        rows.append(r)
    return rows


# ---------------------------------------------------------------------------
# commands


def analyze(values, path, args, prior, source) -> AnalysisReport:
    """Threshold choice, tail fit and mean posterior for one sample."""
    diagnostics = []
    if args.auto:
        diags = threshold_scan(values, _grid(args, values), prior, args.threads)
        choice = select_threshold(diags, args.tolerance)
        u = choice.u
        info = ThresholdInfo(float(u), "rule", choice.low_confidence)
        diagnostics = _diag_rows(diags, choice.index)
    else:
        u = args.threshold
        info = ThresholdInfo(float(u), "given", None)
    if split_sample(values, u).n == 0:
        raise TooFewExceedances(f"no observations at or above u={u:g}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryMaximum)
        post = semiparametric_mean(values, u, prior, args.method, args.draws, args.seed, args.threads)
    naive = naive_mean(values)
    wins = winsorized_mean(values, u)
    tail = TailSummary(post.m, post.n, post.xi_hat, post.sigma_hat, post.lambda_mean, post.lambda_variance,
                       post.method.value, post.acceptance_rate)
    return AnalysisReport(
        input=InputDigest.of(path, values), threshold=info, prior=_prior_dict(prior, source), tail=tail,
        posterior=Estimate(post.mean, post.sd), naive=Estimate(naive.estimate, naive.se),
        winsorized=Estimate(wins.estimate, wins.se), diagnostics=diagnostics, seed=args.seed,
    )


def cmd_fit(args):
    prior, source = build_prior(args)
    report = analyze(read_values(args.input), args.input, args, prior, source)
    return to_json(report) if args.format == "json" else report_to_csv(report)


def cmd_ab(args):
    prior, source = build_prior(args)
    treat_values = read_values(args.treatment)
    control_values = read_values(args.control)
    # both groups share the seed so identical inputs give identical fits
    treat = analyze(treat_values, args.treatment, args, prior, source)
    control = analyze(control_values, args.control, args, prior, source)
    effect = treatment_effect(_as_posterior(treat), _as_posterior(control))
    report = AbReport(treat, control, Estimate(effect.gamma, effect.sd))
    if args.format == "json":
        return to_json(report)
    rows = [("treatment", treat.posterior), ("control", control.posterior), ("effect", report.effect)]
    return "group,estimate,sd\n" + "".join(f"{g},{e.estimate!r},{e.sd!r}\n" for g, e in rows)


def _as_posterior(report):
    return MeanPosterior(report.posterior.estimate, report.posterior.sd**2, report.tail.lambda_mean,
                         report.tail.lambda_variance, Method(report.tail.method))


def cmd_scan(args):
    prior, _ = build_prior(args)
    values = read_values(args.input)
    diags = threshold_scan(values, _grid(args, values), prior, args.threads)
    if not any(d.valid for d in diags):
        raise NoValidDiagnostics("no threshold produced a valid tail fit")
    try:
        selected = select_threshold(diags, args.tolerance).index
    except NoValidDiagnostics:
        selected = None
    rows = _diag_rows(diags, selected)
    if args.format == "csv":
        return scan_to_csv(rows)
    return json.dumps({"kind": "scan", "rows": jsonable(rows)}, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _methods(args, prior):
    names = [m.strip() for m in args.methods.split(",") if m.strip()]
    out = []
    for name in names:
        if name not in METHODS:
            raise ConfigError(f"unknown method {name!r}; choose from {', '.join(sorted(METHODS))}")
        if name.startswith("semiparametric-"):
            out.append(SemiparametricEstimator(name.split("-", 1)[1], prior, args.draws, name))
        else:
            out.append(get_method(name))
    return out


def _write_study(result, args):
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        result.to_csv(out / "study.csv")
        result.to_json(out / "study.json")
        result.write_plot_data(out / "plot_data")
        return None
    if args.format == "json":
        return result.to_json() + "\n"
    buf = io.StringIO()
    result.to_csv(buf)
    return buf.getvalue()


def cmd_simulate(args):
    prior, _ = build_prior(args)
    if args.replicates < 10:
        raise ConfigError("--replicates must be at least 10")
    try:
        configs = [SimConfig(xi, args.n_total, args.exp_mean, args.gpd_sigma, args.tail_fraction, args.fixed_fraction)
                   for xi in _floats(args.xi, "--xi")]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    levels = _floats(args.levels, "--levels") if args.levels else SIM_LEVELS
    result = run_simulation_study(configs, levels, args.replicates, _methods(args, prior), args.seed, args.threads)
    return _write_study(result, args)


def cmd_validate(args):
    prior, source = build_prior(args)
    if args.replicates < 1:
        raise ConfigError("--replicates must be positive")
    if args.synthetic_xi is not None:
        try:
            cfg = SimConfig(args.synthetic_xi, args.synthetic_size)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        big = simulate_dgp(cfg, args.seed)
    elif args.input:
        big = read_values(args.input)
    else:
        raise ConfigError("give an input file or --synthetic-xi")
    if not 1 <= args.subsample_size <= big.size:
        raise ConfigError("--subsample-size must lie in [1, N]")
    pool = big
    if args.prior_from_blocks:
        # blocks are carved off the front of the big sample and not reused for subsamples
        k = args.prior_blocks
        size = args.prior_from_blocks
        if k * size >= big.size:
            raise ConfigError("prior blocks would consume the whole sample")
        u = select_threshold(threshold_scan(big[: k * size], quantile_grid(big, SIM_LEVELS), threads=args.threads)).u
        prior = block_prior(big, u, size, k)
        pool = big[k * size:]
    thresholds = np.array(_floats(args.grid, "--grid")) if args.grid else None
    levels = _floats(args.levels, "--levels") if args.levels else SIM_LEVELS
    result = run_subsample_validation(pool, args.subsample_size, args.replicates, _methods(args, prior), levels,
                                      thresholds, args.seed, args.threads)
    return _write_study(result, args)


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--prior-xi", default="1,1", metavar="A,B", help="Beta(a, b) prior on xi")
    common.add_argument("--prior-sigma", default="0,0", metavar="C,D",
                        help="Gamma(c, d) prior on the tail rate; 0,0 is the reference limit")
    common.add_argument("--prior-from-estimates", metavar="FILE",
                        help="moment-match the xi prior to tail-index estimates in FILE")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out", help="output file (fit, ab, scan) or directory (simulate, validate)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--draws", type=int, default=1000, help="bootstrap / iMH draws")

    grid = _Parser(add_help=False)
    grid.add_argument("--levels", help="comma-separated quantile levels for the threshold grid")
    grid.add_argument("--grid", help="comma-separated explicit thresholds")
    grid.add_argument("--tolerance", type=float, default=RATIO_TOLERANCE, help="ratio tolerance for the rule")

    fit_flags = _Parser(add_help=False)
    which = fit_flags.add_mutually_exclusive_group(required=True)
    which.add_argument("--threshold", type=float)
    which.add_argument("--auto", action="store_true", help="pick the threshold with the ratio rule")
    fit_flags.add_argument("--method", choices=("laplace", "imh"), default="laplace")

    p = _Parser(prog="semitail", description="Semiparametric Bayesian means for heavy-tailed data.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", parents=[common, grid, fit_flags], help="posterior of the mean of one sample")
    f.add_argument("input")
    f.set_defaults(func=cmd_fit)

    a = sub.add_parser("ab", parents=[common, grid, fit_flags], help="treatment effect between two samples")
    a.add_argument("treatment")
    a.add_argument("control")
    a.set_defaults(func=cmd_ab)

    s = sub.add_parser("scan", parents=[common, grid], help="threshold diagnostics table")
    s.add_argument("input")
    s.set_defaults(func=cmd_scan)

    default_methods = "semiparametric-laplace,naive"
    m = sub.add_parser("simulate", parents=[common], help="simulation study on the mixture DGP")
    m.add_argument("--xi", default="0.2,0.5,0.8", help="comma-separated tail indices, one panel each")
    m.add_argument("--n-total", type=int, default=100_000)
    m.add_argument("--exp-mean", type=float, default=10.0)
    m.add_argument("--gpd-sigma", type=float, default=10.0)
    m.add_argument("--tail-fraction", type=float, default=0.5)
    m.add_argument("--fixed-fraction", action="store_true", help="add GPD draws to an exact fraction")
    m.add_argument("--replicates", type=int, default=20)
    m.add_argument("--methods", default=default_methods)
    m.add_argument("--levels", help="comma-separated quantile levels for the threshold grid")
    m.set_defaults(func=cmd_simulate)

    v = sub.add_parser("validate", parents=[common], help="subsample validation against a big sample")
    v.add_argument("input", nargs="?", help="big sample, one value per line")
    v.add_argument("--synthetic-xi", type=float, help="simulate the big sample instead of reading one")
    v.add_argument("--synthetic-size", type=int, default=10_000_000)
    v.add_argument("--subsample-size", type=int, default=50_000)
    v.add_argument("--replicates", type=int, default=100)
    v.add_argument("--methods", default=default_methods)
    v.add_argument("--levels")
    v.add_argument("--grid")
    v.add_argument("--prior-from-blocks", type=int, metavar="SIZE",
                   help="fit the xi prior on disjoint blocks of SIZE values taken from the big sample")
    v.add_argument("--prior-blocks", type=int, default=50, help="number of prior blocks")
    v.set_defaults(func=cmd_validate)
    return p


def _fail(code, exc, out):
    report = ErrorReport(type(exc).__name__, str(exc), code)
    out.write(to_json(report))
    print(f"semitail: {type(exc).__name__}: {exc}", file=sys.stderr)
    return code


def main(argv=None, stdout=None) -> int:
    out = stdout or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        if args.threads < 1 or args.draws < 2:
            raise ConfigError("--threads must be >= 1 and --draws >= 2")
        text = args.func(args)
    except InputError as exc:
        return _fail(EXIT_INPUT, exc, out)
    except InferenceError as exc:
        return _fail(EXIT_INFERENCE, exc, out)
    except (ConfigError, ValueError) as exc:
        return _fail(EXIT_CONFIG, exc, out)
    if text is not None:
        if args.out:
            Path(args.out).write_text(text)
        else:
            out.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
