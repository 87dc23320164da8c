"""Simulation and subsample-validation studies.

Both studies score a set of named estimators over a grid of thresholds and
report RMSE against a known target together with the calibration ratio
(average reported standard deviation divided by the observed RMSE).  Every
replicate draws from its own seed stream, so output is identical for any
number of worker threads.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import naive_mean, subsampling_se, winsorized_mean
from .errors import BoundaryMaximum, InferenceError
from .gpd import GpdParams, gpd_sample
from .mean import semiparametric_mean
from .rng import as_seed_sequence, child_generator, child_sequence, parallel_map
from .tail import BetaGammaPrior, fit_beta_prior, imh_sample, map_fit
from .threshold import ThresholdDiagnostic, select_threshold

__all__ = [
    "SimConfig",
    "StudyResult",
    "Estimator",
    "SemiparametricEstimator",
    "METHODS",
    "SIM_LEVELS",
    "get_method",
    "simulate_dgp",
    "run_simulation_study",
    "run_subsample_validation",
    "background_prior",
    "block_prior",
]

# quantile levels for the threshold grid; exceedance fraction roughly halves per step
SIM_LEVELS = (0.5, 0.7, 0.8, 0.9, 0.95, 0.975, 0.99, 0.995, 0.999)

ROW_FIELDS = ["panel", "method", "grid_index", "level", "threshold", "rmse", "mean_sd",
              "calibration", "mean_ratio", "replicates", "failures"]


@dataclass(frozen=True)
class SimConfig:
    """Exponential bulk with a GPD addend on a random fraction of draws."""

    xi: float = 0.5
    n_total: int = 100_000
    exp_mean: float = 10.0
    gpd_sigma: float = 10.0
    tail_fraction: float = 0.5
    fixed_fraction: bool = False

    def __post_init__(self):
        if not (0 <= self.tail_fraction <= 1):
            raise ValueError("tail_fraction must lie in [0, 1]")
        if self.n_total < 100:
            raise ValueError("n_total must be at least 100")
        GpdParams(self.xi, self.gpd_sigma)

    @property
    def population_mean(self) -> float:
        return self.exp_mean + self.tail_fraction * self.gpd_sigma / (1.0 - self.xi)

    @property
    def label(self) -> str:
        return f"xi={self.xi:g}"


def simulate_dgp(config: SimConfig, rng=None) -> np.ndarray:
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(as_seed_sequence(rng))
    n = config.n_total
    z = gen.exponential(config.exp_mean, n)
    if config.fixed_fraction:
        hit = np.zeros(n, dtype=bool)
        hit[gen.permutation(n)[: int(round(config.tail_fraction * n))]] = True
    else:
        hit = gen.random(n) < config.tail_fraction
    z[hit] += gpd_sample(GpdParams(config.xi, config.gpd_sigma), int(hit.sum()), gen)
    return z


# ---------------------------------------------------------------------------
# estimators


class Estimator:
    """A named estimator returning ``(estimate, sd)`` for a sample."""

    name = "estimator"
    uses_threshold = True

    def __call__(self, values, u, seed):
        raise NotImplementedError


class SemiparametricEstimator(Estimator):
    def __init__(self, method="laplace", prior=None, draws=1000, name=None):
        self.method = method
        self.prior = prior or BetaGammaPrior()
        self.draws = draws
        self.name = name or f"semiparametric-{method}"

    def __call__(self, values, u, seed):
        post = semiparametric_mean(values, u, self.prior, self.method, self.draws, seed)
        return post.mean, post.sd


class _Naive(Estimator):
    name = "naive"
    uses_threshold = False

    def __call__(self, values, u, seed):
        r = naive_mean(values)
        return r.estimate, r.se


class _Winsorized(Estimator):
    name = "winsorized"

    def __call__(self, values, u, seed):
        r = winsorized_mean(values, u)
        return r.estimate, r.se


class _Subsampling(Estimator):
    name = "subsampling"

    def __call__(self, values, u, seed):
        r = subsampling_se(values, seed, threshold=u)
        return r.estimate, r.se


METHODS = {
    "semiparametric-laplace": lambda: SemiparametricEstimator("laplace"),
    "semiparametric-imh": lambda: SemiparametricEstimator("imh"),
    "naive": _Naive,
    "winsorized": _Winsorized,
    "subsampling": _Subsampling,
}


def get_method(method) -> Estimator:
    if isinstance(method, Estimator):
        return method
    try:
        return METHODS[method]()
    except KeyError:
        raise ValueError(f"unknown method {method!r}; choose from {sorted(METHODS)}") from None


# ---------------------------------------------------------------------------
# results


@dataclass
class StudyResult:
    """Per-replicate records and their aggregates.

    ``records`` hold one entry per (panel, replicate, method, grid index);
    ``selections`` hold the rule-selected grid index per (panel, replicate).
    Rows with ``grid_index == -1`` aggregate each replicate at its selected
    threshold.
    """

    records: list = field(default_factory=list)
    selections: list = field(default_factory=list)
    targets: dict = field(default_factory=dict)

    def _cells(self):
        cells = {}
        for r in self.records:
            cells.setdefault((r["panel"], r["method"], r["grid_index"]), []).append(r)
        sel = {(s["panel"], s["replicate"]): s["grid_index"] for s in self.selections}
        for r in self.records:
            if r["grid_index"] >= 0 and sel.get((r["panel"], r["replicate"])) == r["grid_index"]:
                cells.setdefault((r["panel"], r["method"], -1), []).append(r)
        return cells

    @property
    def rows(self) -> list:
        out = []
        for (panel, method, gi), recs in sorted(self._cells().items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2])):
            recs = sorted(recs, key=lambda r: r["replicate"])
            ok = [r for r in recs if r["error"] is not None]
            rmse = math.sqrt(math.fsum(r["error"] ** 2 for r in ok) / len(ok)) if ok else math.nan
            sds = [r["sd"] for r in ok if r["sd"] is not None and math.isfinite(r["sd"])]
            mean_sd = math.fsum(sds) / len(sds) if sds else math.nan
            ratios = [r["ratio"] for r in ok if r.get("ratio") is not None and math.isfinite(r["ratio"])]
            us = [r["threshold"] for r in recs if r["threshold"] is not None]
            out.append({
                "panel": panel, "method": method, "grid_index": gi,
                "level": recs[0]["level"] if gi >= 0 else None,
                "threshold": math.fsum(us) / len(us) if us else None,
                "rmse": rmse, "mean_sd": mean_sd,
                "calibration": mean_sd / rmse if ok and rmse > 0 else math.nan,
                "mean_ratio": math.fsum(ratios) / len(ratios) if ratios else math.nan,
                "replicates": len(ok), "failures": len(recs) - len(ok),
            })
        return out

    def curve(self, panel, method, column="rmse") -> np.ndarray:
        rows = [r for r in self.rows if r["panel"] == panel and r["method"] == method and r["grid_index"] >= 0]
        return np.array([r[column] for r in sorted(rows, key=lambda r: r["grid_index"])], dtype=float)

    def cell(self, panel, method, grid_index=-1) -> dict:
        for r in self.rows:
            if (r["panel"], r["method"], r["grid_index"]) == (panel, method, grid_index):
                return r
        raise KeyError((panel, method, grid_index))

    def selected_indices(self, panel) -> np.ndarray:
        sel = sorted((s for s in self.selections if s["panel"] == panel), key=lambda s: s["replicate"])
        return np.array([s["grid_index"] for s in sel])

    def to_csv(self, target):
        """Write the aggregate rows to a path or an open text stream."""
        if hasattr(target, "write"):
            self._write_csv(target)
            return
        with open(target, "w", newline="") as fh:
            self._write_csv(fh)

    def _write_csv(self, fh):
        w = csv.DictWriter(fh, fieldnames=ROW_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: _fmt(r[k]) for k in ROW_FIELDS})

    def to_json(self, path=None) -> str:
        sel = sorted(self.selections, key=lambda r: (r["panel"], r["replicate"]))
        doc = {"targets": self.targets, "rows": _clean(self.rows), "selections": _clean(sel)}
        text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=False)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    def write_plot_data(self, directory) -> list:
        """One CSV per (panel, method): threshold against each metric."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        written = []
        keys = sorted({(r["panel"], r["method"]) for r in self.rows})
        for panel, method in keys:
            rows = sorted((r for r in self.rows if r["panel"] == panel and r["method"] == method
                           and r["grid_index"] >= 0), key=lambda r: r["grid_index"])
            path = directory / f"{_slug(panel)}__{_slug(method)}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["threshold", "rmse", "calibration", "mean_ratio"])
                for r in rows:
                    w.writerow([_fmt(r["threshold"]), _fmt(r["rmse"]), _fmt(r["calibration"]), _fmt(r["mean_ratio"])])
            written.append(path)
        return written


def _slug(s):
    return "".join(c if c.isalnum() or c in "-." else "_" for c in str(s))


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return "" if not math.isfinite(x) else repr(x)
    return str(x)


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


# ---------------------------------------------------------------------------
# drivers


def _evaluate(values, thresholds, levels, methods, target, panel, replicate, seed, scan_prior):
    """Score every method at every threshold on one sample."""
    records = []
    diags = []
    for j, u in enumerate(thresholds):
        v = values[values >= u] - u
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", BoundaryMaximum)
                p = map_fit(scan_prior, v)
            diags.append(ThresholdDiagnostic(float(u), v.size, p.xi, p.sigma))
        except InferenceError as exc:
            diags.append(ThresholdDiagnostic(float(u), v.size, error=type(exc).__name__))
    for k, method in enumerate(methods):
        grid = enumerate(thresholds) if method.uses_threshold else [(-2, None)]
        for j, u in grid:
            rec = {"panel": panel, "replicate": replicate, "method": method.name, "grid_index": j,
                   "level": float(levels[j]) if j >= 0 else None,
                   "threshold": float(u) if u is not None else None,
                   "ratio": diags[j].ratio if j >= 0 else None,
                   "estimate": None, "sd": None, "error": None, "failure": None}
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", BoundaryMaximum)
                    est, sd = method(values, u, child_sequence(seed, 1 + k, max(j, 0)))
                rec.update(estimate=float(est), sd=float(sd), error=float(est - target))
            except (InferenceError, ValueError, FloatingPointError) as exc:
                rec["failure"] = type(exc).__name__
            records.append(rec)
    try:
        choice = select_threshold(diags)
        selection = {"panel": panel, "replicate": replicate, "grid_index": choice.index,
                     "threshold": choice.u, "low_confidence": choice.low_confidence}
    except InferenceError:
        selection = {"panel": panel, "replicate": replicate, "grid_index": -1,
                     "threshold": None, "low_confidence": True}
    return records, selection


def run_simulation_study(configs, levels=SIM_LEVELS, replicates: int = 20,
                         methods=("semiparametric-laplace", "naive"), seed=0, threads: int = 1,
                         scan_prior: BetaGammaPrior | None = None) -> StudyResult:
    """Simulate each configuration ``replicates`` times and score methods.

    Thresholds are the empirical quantiles of each simulated sample at
    ``levels``; errors are measured against the analytic population mean.
    """
    if replicates < 10:
        raise ValueError("the simulation study needs at least 10 replicates")
    configs = [configs] if isinstance(configs, SimConfig) else list(configs)
    methods = [get_method(m) for m in methods]
    levels = np.asarray(levels, dtype=float)
    scan_prior = scan_prior or BetaGammaPrior()
    ss = as_seed_sequence(seed)
    result = StudyResult(targets={c.label: c.population_mean for c in configs})

    def job(key):
        p, r = key
        cfg = configs[p]
        z = simulate_dgp(cfg, child_generator(ss, p, r, 0))
        return _evaluate(z, np.quantile(z, levels), levels, methods, cfg.population_mean,
                         cfg.label, r, child_sequence(ss, p, r, 1), scan_prior)

    keys = [(p, r) for p in range(len(configs)) for r in range(replicates)]
    for records, selection in parallel_map(job, keys, threads):
        result.records.extend(records)
        result.selections.append(selection)
    return result


def run_subsample_validation(big_sample, subsample_size: int, replicates: int = 100, methods=("semiparametric-laplace", "naive"),
                             levels=SIM_LEVELS, thresholds=None, seed=0, threads: int = 1,
                             scan_prior: BetaGammaPrior | None = None, panel: str = "subsample") -> StudyResult:
    """Score methods on subsamples against the full-sample mean.

    Thresholds are fixed across replicates: ``thresholds`` if given,
    otherwise quantiles of the big sample at ``levels``.
    """
    if replicates < 1:
        raise ValueError("replicates must be positive")
    z = np.asarray(big_sample, dtype=float).ravel()
    if not (1 <= subsample_size <= z.size):
        raise ValueError("subsample size must lie in [1, N]")
    methods = [get_method(m) for m in methods]
    if thresholds is None:
        thresholds = np.quantile(z, levels)
        levels = np.asarray(levels, dtype=float)
    else:
        thresholds = np.asarray(thresholds, dtype=float)
        levels = np.array([np.mean(z < u) for u in thresholds])
    target = float(z.mean())
    scan_prior = scan_prior or BetaGammaPrior()
    ss = as_seed_sequence(seed)
    result = StudyResult(targets={panel: target})

    def job(r):
        gen = child_generator(ss, r, 0)
        sub = z if subsample_size == z.size else z[gen.choice(z.size, size=subsample_size, replace=False)]
        return _evaluate(sub, thresholds, levels, methods, target, panel, r, child_sequence(ss, r, 1), scan_prior)

    for records, selection in parallel_map(job, range(replicates), threads):
        result.records.extend(records)
        result.selections.append(selection)
    return result


def background_prior(values, u: float, draws: int = 1000, seed=None, threads: int = 1) -> BetaGammaPrior:
    """Informative tail-index prior from a background sample.

    Runs the bootstrap iMH sampler on the exceedances above ``u`` and
    moment-matches a Beta to the posterior draws of ``xi``.
    """
    z = np.asarray(values, dtype=float)
    post = imh_sample(BetaGammaPrior(), z[z >= u] - u, draws, seed=seed, threads=threads)
    return fit_beta_prior(post.xi)


def block_prior(values, u: float, block_size: int, blocks: int | None = None,
                prior: BetaGammaPrior | None = None) -> BetaGammaPrior:
    """Informative tail-index prior from disjoint blocks of a large sample.

    Fits the tail MAP above ``u`` on consecutive blocks of ``block_size``
    values and moment-matches a Beta to the resulting ``xi`` estimates.
    Blocks whose fit fails are skipped.
    """
    z = np.asarray(values, dtype=float).ravel()
    k = z.size // block_size if blocks is None else blocks
    if k < 2 or k * block_size > z.size:
        raise ValueError("need at least two complete blocks")
    prior = prior or BetaGammaPrior()
    est = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryMaximum)
        for b in z[: k * block_size].reshape(k, block_size):
            try:
                est.append(map_fit(prior, b[b >= u] - u).xi)
            except InferenceError:
                continue
    return fit_beta_prior(est)
