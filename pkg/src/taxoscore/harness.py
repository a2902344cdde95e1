"""Rolling-window experiment runner, scheme comparison and power study."""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import gamlss
from .classifications import SCHEMES, build_scheme
from .data_model import Dataset
from .evt_gpd import GpdParams, NoValidThresholdError, ThresholdResult, gpd_cdf, gpd_quantile, select_threshold
from .inference import (CRIT_05, AlignmentError, RejectionProportion, TestResult, comparison_statistic,
                        forecast_comparison_test, yearly_rejection_proportions)
from .scoring import (MomentConditionError, RefDist, ScoreKind, ScoreSeries, WeightKind, crps, energy_score,
                      r_crps, r_es, tw_crps)

log = logging.getLogger(__name__)

WEIGHTS = (WeightKind.EQUAL, WeightKind.CENTER, WeightKind.LEFT, WeightKind.RIGHT)


class PlanError(ValueError):
    """Year span too short for a rolling window plan."""


@dataclass(frozen=True)
class Window:
    train: tuple  # (first, last) inclusive
    test: int


@dataclass(frozen=True)
class WindowPlan:
    windows: tuple

    def __iter__(self):
        return iter(self.windows)

    def __len__(self):
        return len(self.windows)

    @property
    def test_years(self):
        return tuple(w.test for w in self.windows)


def make_window_plan(span, length=5, step=1) -> WindowPlan:
    """Windows of ``length`` training years, each followed by its test year."""
    first, last = int(span[0]), int(span[1])
    if last - first + 1 < length + 1:
        raise PlanError(f"span {first}-{last} is too short for {length} training years plus a test year")
    wins = []
    start = first
    while start + length <= last:
        wins.append(Window((start, start + length - 1), start + length))
        start += step
    return WindowPlan(tuple(wins))


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PipelineConfig:
    """Run configuration; ``from_dict``/``to_dict`` mirror the JSON config file."""

    window_length: int = 5
    step: int = 1
    schemes: tuple = SCHEMES
    score_kinds: tuple = tuple(k.value for k in ScoreKind)
    weights: tuple = tuple(w.value for w in WEIGHTS)
    beta: float = 0.5
    ref_dist: str = RefDist.NORMAL.value
    seed: int = 0
    n_boot: int = 200
    knot_grid: tuple = (0, 2, 3)
    penalty_grid: tuple = (1e-2, 1.0, 1e2)
    terms: tuple = gamlss.ALL_TERMS
    es_draws: int = 2_000
    merge_alpha: float = 0.05
    random_k: int = 4

    def __post_init__(self):
        for name in ("schemes", "score_kinds", "weights", "knot_grid", "penalty_grid", "terms"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown:
            raise ValueError(f"unknown schemes {sorted(unknown)}")
        for k in self.score_kinds:
            ScoreKind(k)
        for w in self.weights:
            WeightKind(w)
        RefDist(self.ref_dist)
        if not 0 < self.beta < 2:
            raise ValueError("beta must lie in (0, 2)")
        if self.window_length < 1 or self.step < 1:
            raise ValueError("window_length and step must be positive")

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        return cls(**d)

    def covariate_spec(self):
        return gamlss.CovariateSpec(terms=self.terms, penalty_grid=self.penalty_grid, knot_grid=self.knot_grid)


# --------------------------------------------------------------------------
# pipeline
# --------------------------------------------------------------------------

@dataclass
class WindowResult:
    window: Window
    threshold: ThresholdResult | None = None
    model: gamlss.FittedSeverityModel | None = None
    scores: dict = field(default_factory=dict)  # (kind, weight) -> ScoreSeries
    n_test: int = 0
    n_below_threshold: int = 0
    n_excluded: int = 0
    notes: list = field(default_factory=list)
    error: str | None = None


@dataclass
class PipelineResult:
    scheme: str
    plan: WindowPlan
    windows: list
    config: PipelineConfig

    def pooled(self, kind, weight):
        """Scores of all windows for ``(kind, weight)`` concatenated in window order."""
        kind, weight = ScoreKind(kind), WeightKind(weight)
        parts = [w.scores[(kind, weight)] for w in self.windows if (kind, weight) in w.scores]
        if not parts:
            return None
        ids = sum((p.event_ids for p in parts), ())
        vals = np.concatenate([p.values for p in parts])
        return ScoreSeries(self.scheme, kind, weight, ids, vals, parts[0].beta, parts[0].ref)

    def yearly(self, kind, weight):
        kind, weight = ScoreKind(kind), WeightKind(weight)
        return {w.window.test: w.scores[(kind, weight)] for w in self.windows if (kind, weight) in w.scores}

    def summary(self):
        out = []
        for w in self.windows:
            out.append({
                "train": list(w.window.train), "test": w.window.test,
                "threshold": None if w.threshold is None else w.threshold.to_dict(),
                "model": None if w.model is None else w.model.to_dict(),
                "n_test": w.n_test, "n_below_threshold": w.n_below_threshold, "n_excluded": w.n_excluded,
                "score_means": {f"{k.value}/{wt.value}": s.mean() for (k, wt), s in sorted(
                    w.scores.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value))},
                "notes": list(w.notes), "error": w.error,
            })
        return {"scheme": self.scheme, "windows": out}


def window_thresholds(d: Dataset, plan: WindowPlan, cfg: PipelineConfig):
    """Threshold per window from its training years (shared by all schemes).

    A window without an accepted candidate maps to the exception instance.
    """
    out = {}
    for i, w in enumerate(plan):
        train = d.years(*w.train)
        try:
            out[w] = select_threshold(train.loss, n_boot=cfg.n_boot, seed=[cfg.seed, i], stop_at_first=True)
        except (NoValidThresholdError, ValueError) as exc:
            out[w] = exc
    return out


def _es_series(params, y, beta, weight, n_mc, seed, chunk=200):
    out = np.empty(y.size)
    for s in range(0, y.size, chunk):
        sl = slice(s, s + chunk)
        out[sl] = energy_score(GpdParams(params.mu[sl], params.tau[sl]), y[sl], beta, weight,
                               method="mc", n_mc=n_mc, seed=seed)
    return out


def score_forecasts(scheme, ids, params: GpdParams, y, cfg: PipelineConfig, seed=0):
    """All configured score series for GPD forecasts ``params`` of exceedances ``y``.

    CRPS is only defined with equal weight. Series that cannot be computed
    (infinite CRPS integrals, ES moment condition) are skipped and reported
    in the returned notes.
    """
    scores, notes = {}, []
    ref = RefDist(cfg.ref_dist)
    pit = gpd_cdf(y, params)
    for kind in map(ScoreKind, cfg.score_kinds):
        for weight in map(WeightKind, cfg.weights):
            beta, r = None, None
            if kind is ScoreKind.CRPS:
                if weight is not WeightKind.EQUAL:
                    continue
                vals = crps(params, y)
            elif kind is ScoreKind.TWCRPS:
                vals = tw_crps(params, y, weight)
            elif kind is ScoreKind.ES:
                beta = cfg.beta
                try:
                    vals = _es_series(params, y, beta, weight, cfg.es_draws, seed)
                except MomentConditionError as exc:
                    notes.append(f"{kind.value}/{weight.value} skipped: {exc}")
                    continue
            elif kind is ScoreKind.RCRPS:
                vals, r = r_crps(pit, weight, ref), ref
            else:
                beta, r = cfg.beta, ref
                vals = r_es(pit, beta, weight, ref)
            vals = np.atleast_1d(np.asarray(vals, float))
            if not np.all(np.isfinite(vals)):
                notes.append(f"{kind.value}/{weight.value} skipped: infinite score (tau <= 1/2)")
                continue
            scores[(kind, weight)] = ScoreSeries(scheme, kind, weight, ids, vals, beta, r)
    return scores, notes


def _scheme_for_window(name, train, cfg, threshold, window_index, fixed):
    if fixed is not None:
        return fixed
    opts = {}
    if name == "Tail":
        opts = {"threshold": threshold, "alpha": cfg.merge_alpha}
    elif name == "Body":
        opts = {"alpha": cfg.merge_alpha}
    elif name == "Random":
        opts = {"k": cfg.random_k}
    seed = cfg.seed if name == "Random" else cfg.seed + window_index
    return build_scheme(name, train, seed=seed, **opts)


@dataclass
class WindowFit:
    """Training-side output of a window: threshold, labelling and fitted model."""

    window: Window
    threshold: ThresholdResult
    assignment: object
    model: gamlss.FittedSeverityModel
    knot_path: tuple = ()
    notes: list = field(default_factory=list)


def fit_window(d: Dataset, scheme, window: Window, cfg: PipelineConfig, threshold, window_index=0,
               assignment=None) -> WindowFit:
    """Build the scheme on the training years and fit the GPD regression to their exceedances.

    Only training years are read, so test-year data cannot leak into the fit.
    """
    u = threshold.u
    train = d.years(*window.train)
    spec = cfg.covariate_spec()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", gamlss.DesignWarning)
        if assignment is None:
            a_train = _scheme_for_window(scheme, train, cfg, u, window_index, None)
        else:
            a_train = assignment.apply(train)
        ex = train.subset(a_train.included(train) & (train.loss > u))
        design = gamlss.build_design(ex, spec, a_train)
        sel = gamlss.select_knots_aic(ex.loss - u, design, spec, family=gamlss.GPD, threshold=u)
    notes = [str(w.message) for w in caught if issubclass(w.category, gamlss.DesignWarning)]
    return WindowFit(window, threshold, a_train, sel.model, sel.path, notes)


def score_window(d: Dataset, wf: WindowFit, cfg: PipelineConfig, window_index=0) -> WindowResult:
    """Score the test-year exceedances of ``wf.window`` with the window's forecasts."""
    res = WindowResult(wf.window, threshold=wf.threshold, model=wf.model, notes=list(wf.notes))
    u = wf.threshold.u
    test = d.years(wf.window.test, wf.window.test)
    a_test = wf.assignment.apply(test)
    inc = a_test.included(test)
    res.n_excluded = int((~inc).sum())
    res.n_below_threshold = int((inc & (test.loss <= u)).sum())
    sub = test.subset(inc & (test.loss > u))
    res.n_test = len(sub)
    if len(sub) == 0:
        res.notes.append("no test-year exceedances")
        return res
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", gamlss.DesignWarning)
        mu, tau = gamlss.predict_params(wf.model, sub, a_test)
    res.notes += [str(w.message) for w in caught if issubclass(w.category, gamlss.DesignWarning)]
    res.scores, notes = score_forecasts(wf.model.design.scheme_name or "None", tuple(sub.ids),
                                        GpdParams(mu, tau), sub.loss - u, cfg, seed=[cfg.seed, window_index])
    res.notes += notes
    return res


def run_window(d: Dataset, scheme, window: Window, cfg: PipelineConfig, threshold, window_index=0,
               assignment=None) -> WindowResult:
    """Fit on the training years of ``window`` and score its test year."""
    if isinstance(threshold, Exception):
        res = WindowResult(window)
        res.error = f"threshold selection failed: {threshold}"
        return res
    wf = fit_window(d, scheme, window, cfg, threshold, window_index, assignment)
    return score_window(d, wf, cfg, window_index)


def run_pipeline(d: Dataset, scheme, cfg: PipelineConfig, thresholds=None, assignment=None) -> PipelineResult:
    """Rolling-window fit and out-of-sample scoring of one scheme.

    ``scheme`` is a scheme name, rebuilt on each training window, or pass a
    fixed ``assignment`` whose rule labels every window. Stage failures are
    stored on their window; the remaining windows still run.
    """
    span = d.span
    if span is None:
        raise PlanError("empty dataset")
    plan = make_window_plan(span, cfg.window_length, cfg.step)
    if thresholds is None:
        thresholds = window_thresholds(d, plan, cfg)
    results = []
    for i, w in enumerate(plan):
        try:
            results.append(run_window(d, scheme, w, cfg, thresholds[w], i, assignment))
        except Exception as exc:  # noqa: BLE001 - attached to the window by contract
            log.warning("window %s failed for %s: %s", w, scheme, exc)
            r = WindowResult(w, threshold=None if isinstance(thresholds[w], Exception) else thresholds[w])
            r.error = f"{type(exc).__name__}: {exc}"
            results.append(r)
    return PipelineResult(scheme, plan, results, cfg)


# --------------------------------------------------------------------------
# comparisons
# --------------------------------------------------------------------------

def _align(s: ScoreSeries, base: ScoreSeries):
    """Restrict ``base`` to the events of ``s``; every event of ``s`` must be in ``base``."""
    pos = {eid: i for i, eid in enumerate(base.event_ids)}
    missing = [eid for eid in s.event_ids if eid not in pos]
    if missing:
        raise AlignmentError(f"{len(missing)} scored events of {s.scheme_name} are missing from the baseline")
    idx = np.array([pos[eid] for eid in s.event_ids], dtype=int)
    return ScoreSeries(base.scheme_name, base.kind, base.weight, s.event_ids, base.values[idx],
                       base.beta, base.ref)


@dataclass
class ComparisonTables:
    baseline: str
    overall: dict  # (scheme, kind, weight) -> TestResult
    yearly: dict  # (scheme, kind, weight) -> RejectionProportion
    yearly_tests: dict  # (scheme, kind, weight) -> {year: TestResult}

    def to_csv(self, out_dir, prefix=""):
        """One overall and one yearly table per score kind (schemes x weights)."""
        import os

        paths = []
        kinds = sorted({k for _, k, _ in self.overall} | {k for _, k, _ in self.yearly}, key=lambda k: k.value)
        schemes = list(dict.fromkeys(s for s, _, _ in list(self.overall) + list(self.yearly)))
        for kind in kinds:
            for label, table, fmt in (("overall", self.overall, lambda r: f"{r.statistic:.6g}"),
                                      ("yearly", self.yearly, lambda r: f"{r.proportion:.6g}")):
                path = os.path.join(out_dir, f"{prefix}{label}_{kind.value}_vs_{self.baseline}.csv")
                with open(path, "w", newline="", encoding="utf-8") as fh:
                    wr = csv.writer(fh)
                    wr.writerow(["scheme"] + [w.value for w in WEIGHTS])
                    for s in schemes:
                        wr.writerow([s] + [fmt(table[(s, kind, w)]) if (s, kind, w) in table else ""
                                           for w in WEIGHTS])
                paths.append(path)
        return paths


def _pool(by_year):
    parts = [by_year[y] for y in sorted(by_year)]
    p0 = parts[0]
    return ScoreSeries(p0.scheme_name, p0.kind, p0.weight, sum((p.event_ids for p in parts), ()),
                       np.concatenate([p.values for p in parts]), p0.beta, p0.ref)


def compare_series(series: dict, baseline="None") -> ComparisonTables:
    """Comparison tables from ``series[scheme][(kind, weight)][year] -> ScoreSeries``.

    Only years scored by both the scheme and the baseline enter a comparison.

    Scheme scores are ``s1`` and baseline scores ``s2``, so a positive
    statistic favours the scheme. Overall tests pool all out-of-sample years;
    yearly tests give the rejection proportions.
    """
    if baseline not in series:
        raise KeyError(f"baseline {baseline!r} missing from results")
    base = series[baseline]
    overall, yearly, yearly_tests = {}, {}, {}
    for name, by_key in series.items():
        for (kind, weight), by_year in sorted(by_key.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)):
            if (kind, weight) not in base:
                continue
            by = base[(kind, weight)]
            common = sorted(set(by_year) & set(by))  # a series skipped in some year drops that year
            if not common:
                continue
            s = _pool({y: by_year[y] for y in common})
            overall[(name, kind, weight)] = forecast_comparison_test(s, _align(s, _pool({y: by[y] for y in common})))
            per_year = {}
            for year, sy in sorted(by_year.items()):
                if year in by and len(sy) >= 2:
                    per_year[year] = forecast_comparison_test(sy, _align(sy, by[year]))
            yearly_tests[(name, kind, weight)] = per_year
            if per_year:
                yearly[(name, kind, weight)] = yearly_rejection_proportions(per_year.values())
    return ComparisonTables(baseline, overall, yearly, yearly_tests)


def result_series(res: PipelineResult):
    """``{(kind, weight): {year: ScoreSeries}}`` of a pipeline result."""
    out = {}
    for w in res.windows:
        for key, s in w.scores.items():
            out.setdefault(key, {})[w.window.test] = s
    return out


def compare_schemes(results: dict, baseline="None") -> ComparisonTables:
    """Test every scheme of ``results`` (name -> PipelineResult) against ``baseline``."""
    if baseline not in results:
        raise KeyError(f"baseline {baseline!r} missing from results")
    plans = {name: r.plan.test_years for name, r in results.items()}
    if len(set(plans.values())) != 1:
        raise AlignmentError("results use different window plans")
    return compare_series({name: result_series(r) for name, r in results.items()}, baseline)


def trimmed_paths(result: PipelineResult, baseline: PipelineResult, d: Dataset, kind, weight,
                  quantiles=(0.5, 0.6, 0.7, 0.8, 0.9, 1.0)):
    """Trimmed comparison statistics per quantile on pooled out-of-sample scores."""
    from .inference import trimmed_test

    s = result.pooled(kind, weight)
    b = _align(s, baseline.pooled(kind, weight))
    pos = {eid: i for i, eid in enumerate(d.ids)}
    y = d.loss[[pos[e] for e in s.event_ids]]
    return trimmed_test(s, b, y, quantiles)


# --------------------------------------------------------------------------
# power study
# --------------------------------------------------------------------------

POWER_SIZES = (20, 50, 100, 500, 1000, 2000, 5000)


@dataclass(frozen=True)
class PowerTable:
    sizes: tuple
    weights: tuple
    cells: np.ndarray  # len(sizes) x len(weights)
    n_rep: int
    kind: str
    universe_size: int

    def column(self, weight):
        return self.cells[:, list(self.weights).index(WeightKind(weight))]

    def to_dict(self):
        return {"kind": self.kind, "n_rep": self.n_rep, "universe_size": self.universe_size,
                "sizes": list(self.sizes), "weights": [w.value for w in self.weights],
                "cells": self.cells.tolist()}

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(["sample_size"] + [w.value for w in self.weights])
            for n, row in zip(self.sizes, self.cells):
                wr.writerow([n] + [f"{v:.4f}" for v in row])


def rejection_rates(diff, sizes, n_rep, seed=0, chunk_cells=2_000_000):
    """Share of size-``n`` resamples (with replacement) of ``diff`` whose statistic exceeds 1.64."""
    diff = np.asarray(diff, dtype=float)
    rng = np.random.default_rng(seed)
    out = []
    for n in sizes:
        rows = max(1, chunk_cells // n)
        hits = 0
        done = 0
        while done < n_rep:
            m = min(rows, n_rep - done)
            t, _, _ = comparison_statistic(diff[rng.integers(0, diff.size, (m, n))], axis=1)
            hits += int(np.count_nonzero(t > CRIT_05))
            done += m
        out.append(hits / n_rep)
    return np.array(out)


def power_study(m: gamlss.FittedSeverityModel, baseline_model: gamlss.FittedSeverityModel, events: Dataset,
                assignment=None, baseline_assignment=None, sizes=POWER_SIZES, n_rep=10_000,
                n_draws_per_event=1_000, seed=0, kind=ScoreKind.RCRPS, beta=0.5, ref=RefDist.NORMAL,
                weights=WEIGHTS) -> PowerTable:
    """Power of the comparison test of ``m`` against ``baseline_model``.

    Each event of ``events`` receives ``n_draws_per_event`` exceedances drawn
    from its forecast under ``m``; both models score every draw, and
    ``n_rep`` subsets of each size (drawn with replacement) are tested.
    Only the residual scores (rCRPS, rES) are supported.
    """
    kind = ScoreKind(kind)
    if kind not in (ScoreKind.RCRPS, ScoreKind.RES):
        raise ValueError("power_study supports the residual scores rCRPS and rES")
    if not sizes:
        raise ValueError("sizes must be nonempty")
    if n_rep < 1000:
        raise ValueError("n_rep must be at least 1000")
    mu1, tau1 = gamlss.predict_params(m, events, assignment)
    mu0, tau0 = gamlss.predict_params(baseline_model, events, baseline_assignment)
    rng = np.random.default_rng(seed)
    u = rng.random((len(events), n_draws_per_event))
    y = gpd_quantile(u, GpdParams(mu1[:, None], tau1[:, None]))
    p1 = u.ravel()
    p0 = gpd_cdf(y, GpdParams(mu0[:, None], tau0[:, None]))
    # where the forecasts coincide the round trip through the quantile would only add rounding noise
    same = (mu0 == mu1) & (tau0 == tau1)
    p0[same] = u[same]
    p0 = p0.ravel()
    cells = []
    for w in map(WeightKind, weights):
        if kind is ScoreKind.RCRPS:
            s1, s0 = r_crps(p1, w, ref), r_crps(p0, w, ref)
        else:
            s1, s0 = r_es(p1, beta, w, ref), r_es(p0, beta, w, ref)
        cells.append(rejection_rates(s0 - s1, sizes, n_rep, seed=[seed, len(cells)]))
    return PowerTable(tuple(sizes), tuple(map(WeightKind, weights)), np.column_stack(cells), n_rep, kind.value,
                      int(p1.size))


def power_from_scores(s_model, s_baseline, sizes=POWER_SIZES, n_rep=10_000, seed=0):
    """Rejection rates for a precomputed universe of paired scores."""
    return rejection_rates(np.asarray(s_baseline) - np.asarray(s_model), sizes, n_rep, seed)
