"""Hypothesis tests on score series, residuals and category frequencies."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from .scoring import ScoreSeries

__all__ = [
    "AlignmentError",
    "Chi2Result",
    "CRIT_01",
    "CRIT_05",
    "RejectionProportion",
    "TestResult",
    "comparison_statistic",
    "cvm_2samp_statistic",
    "forecast_comparison_test",
    "frequency_chi2",
    "normality_gof",
    "normality_statistic",
    "trimmed_test",
    "two_sample_distance_test",
    "yearly_rejection_proportions",
]

CRIT_05 = 1.64
CRIT_01 = 2.32


class AlignmentError(ValueError):
    """Score series do not refer to the same events or the same score definition."""


@dataclass(frozen=True)
class TestResult:
    statistic: float
    n: int
    p_value: float
    reject_05: bool
    reject_01: bool
    mean_diff: float
    sigma: float

    __test__ = False  # not a pytest class

    @classmethod
    def from_statistic(cls, statistic, n, mean_diff, sigma):
        statistic = float(statistic)
        return cls(
            statistic=statistic,
            n=int(n),
            p_value=float(stats.norm.sf(statistic)),
            reject_05=bool(statistic > CRIT_05),
            reject_01=bool(statistic > CRIT_01),
            mean_diff=float(mean_diff),
            sigma=float(sigma),
        )

    def to_dict(self):
        d = asdict(self)
        for key in ("statistic", "p_value"):
            if math.isinf(d[key]):
                d[key] = "inf" if d[key] > 0 else "-inf"
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def comparison_statistic(d, axis=-1):
    """Statistic ``sqrt(n) * mean(d) / sigma`` with ``sigma**2 = mean(d**2)``.

    ``d`` holds per-observation score differences oriented so that positive
    values favour the first model. Vectorized along ``axis``. A zero
    ``sigma`` gives 0 for a zero mean and a signed infinity otherwise.
    """
    d = np.asarray(d, dtype=float)
    n = d.shape[axis]
    mean = d.mean(axis=axis)
    sigma = np.sqrt(np.mean(d * d, axis=axis))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.sqrt(n) * mean / sigma
    t = np.where(sigma > 0, t, np.where(mean > 0, np.inf, np.where(mean < 0, -np.inf, 0.0)))
    return t, mean, sigma


def _check_aligned(s1: ScoreSeries, s2: ScoreSeries):
    if s1.event_ids != s2.event_ids:
        raise AlignmentError("score series are not aligned on identical event ids")
    if (s1.kind, s1.weight, s1.beta, s1.ref) != (s2.kind, s2.weight, s2.beta, s2.ref):
        raise AlignmentError("score series differ in kind, weight, beta or reference distribution")


def forecast_comparison_test(s1, s2) -> TestResult:
    """One-sided test that model 1 forecasts better than model 2.

    Scores are lower-is-better, so the differences are ``s2 - s1`` and a large
    positive statistic rejects equal performance in favour of model 1. The
    statistic is compared with the standard normal critical values 1.64 and
    2.32.
    """
    if isinstance(s1, ScoreSeries) or isinstance(s2, ScoreSeries):
        _check_aligned(s1, s2)
        a, b = s1.values, s2.values
    else:
        a, b = np.asarray(s1, float), np.asarray(s2, float)
        if a.shape != b.shape:
            raise AlignmentError("score arrays differ in length")
    if a.size < 2:
        raise ValueError("at least two paired scores are required")
    t, mean, sigma = comparison_statistic(b - a)
    return TestResult.from_statistic(t, a.size, mean, sigma)


@dataclass(frozen=True)
class RejectionProportion:
    rejections: int
    total: int

    @property
    def proportion(self):
        return self.rejections / self.total

    def __float__(self):
        return self.proportion


def yearly_rejection_proportions(results) -> RejectionProportion:
    """Share of per-year results rejecting at the 5% level."""
    results = list(results)
    if not results:
        raise ValueError("no results to summarize")
    return RejectionProportion(sum(r.reject_05 for r in results), len(results))


TRIM_QUANTILES = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0)


def trimmed_test(s1, s2, realizations, trim_quantiles=TRIM_QUANTILES):
    """Comparison test restricted to the smallest realizations.

    For each ``q`` the ``floor(n q)`` events with the smallest realized losses
    are kept (stable order, so tied boundary values are taken in input order)
    and the paired scores of those events are tested.

    Returns a dict mapping ``q`` to :class:`TestResult`.
    """
    y = np.asarray(realizations, dtype=float)
    if y.size == 0:
        raise ValueError("realizations must be nonempty")
    if len(s1) != y.size or len(s2) != y.size:
        raise AlignmentError("realizations and scores differ in length")
    order = np.argsort(y, kind="stable")
    out = {}
    for q in trim_quantiles:
        k = int(math.floor(y.size * q + 1e-9))
        mask = np.zeros(y.size, dtype=bool)
        mask[order[:k]] = True
        if isinstance(s1, ScoreSeries):
            out[q] = forecast_comparison_test(s1.subset(mask), s2.subset(mask))
        else:
            out[q] = forecast_comparison_test(np.asarray(s1)[mask], np.asarray(s2)[mask])
    return out


# --------------------------------------------------------------------------
# normality goodness of fit with Monte-Carlo p-values
# --------------------------------------------------------------------------

def normality_statistic(x, test):
    """KS, CvM or AD statistic of each row of ``x`` against N(0, 1)."""
    x = np.sort(np.atleast_2d(np.asarray(x, dtype=float)), axis=1)
    n = x.shape[1]
    i = np.arange(1, n + 1)
    test = test.upper()
    if test == "KS":
        cdf = stats.norm.cdf(x)
        return np.maximum((i / n - cdf).max(axis=1), (cdf - (i - 1) / n).max(axis=1))
    if test == "CVM":
        cdf = stats.norm.cdf(x)
        return 1.0 / (12 * n) + ((cdf - (2 * i - 1) / (2.0 * n)) ** 2).sum(axis=1)
    if test == "AD":
        logcdf = stats.norm.logcdf(x)
        logsf = stats.norm.logsf(x)
        return -n - ((2 * i - 1) * (logcdf + logsf[:, ::-1])).sum(axis=1) / n
    raise ValueError(f"unknown test {test!r}; use KS, CvM or AD")


def normality_gof(residuals, test="AD", n_mc=10_000, seed=0, chunk=2_000):
    """Monte-Carlo p-value of a normality test with fully specified N(0, 1).

    ``p = (1 + #{simulated >= observed}) / (n_mc + 1)`` over ``n_mc``
    standard-normal samples of the same size.
    """
    r = np.asarray(residuals, dtype=float).ravel()
    if r.size < 8:
        raise ValueError("at least 8 residuals are required")
    if n_mc < 1000:
        raise ValueError("n_mc must be at least 1000")
    observed = normality_statistic(r, test)[0]
    rng = np.random.default_rng(seed)
    exceed = 0
    done = 0
    while done < n_mc:
        m = min(chunk, n_mc - done)
        sims = normality_statistic(rng.standard_normal((m, r.size)), test)
        exceed += int(np.count_nonzero(sims >= observed))
        done += m
    return (1.0 + exceed) / (n_mc + 1.0)


# --------------------------------------------------------------------------
# two-sample tests used for merging residual groups
# --------------------------------------------------------------------------

def cvm_2samp_statistic(a, b):
    """Two-sample Cramer-von Mises statistic (Anderson 1962 form)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n, m = a.size, b.size
    pooled = np.concatenate([a, b])
    ecdf_a = np.searchsorted(np.sort(a), pooled, side="right") / n
    ecdf_b = np.searchsorted(np.sort(b), pooled, side="right") / m
    return n * m / (n + m) ** 2 * np.sum((ecdf_a - ecdf_b) ** 2)


def two_sample_distance_test(a, b, kind="KS", n_boot=2_000, seed=0):
    """Distance and p-value of a two-sample test.

    ``kind="KS"`` uses the Kolmogorov-Smirnov statistic with scipy's p-value;
    ``kind="CvM"`` uses the Cramer-von Mises statistic with a bootstrap p-value
    from ``n_boot`` resamples of the pooled sample. Identical multisets give
    distance 0 and p-value 1.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if min(a.size, b.size) < 5:
        raise ValueError("both samples need at least 5 observations")
    kind = kind.upper()
    if kind == "KS":
        res = stats.ks_2samp(a, b)
        dist = float(res.statistic)
        return dist, (1.0 if dist == 0 else float(res.pvalue))
    if kind != "CVM":
        raise ValueError(f"unknown two-sample test {kind!r}")
    dist = float(cvm_2samp_statistic(a, b))
    if dist == 0:
        return 0.0, 1.0
    rng = np.random.default_rng(seed)
    pooled = np.concatenate([a, b])
    exceed = 0
    for _ in range(n_boot):
        draw = rng.choice(pooled, size=pooled.size, replace=True)
        if cvm_2samp_statistic(draw[: a.size], draw[a.size:]) >= dist:
            exceed += 1
    return dist, (1.0 + exceed) / (n_boot + 1.0)


# --------------------------------------------------------------------------
# frequency comparison
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Chi2Result:
    statistic: float
    dof: int
    p_value: float


def frequency_chi2(counts_model, counts_baseline) -> Chi2Result:
    """Two-sample chi-squared test on the 2 x K table of category counts.

    Categories empty in both samples are dropped. No continuity correction.
    """
    a = np.asarray(counts_model, dtype=float)
    b = np.asarray(counts_baseline, dtype=float)
    if a.shape != b.shape:
        raise ValueError("count vectors must share the category vocabulary")
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("counts must be nonnegative")
    if a.sum() <= 0 or b.sum() <= 0:
        raise ValueError("chi-squared test undefined: a sample has zero total count")
    keep = (a + b) > 0
    table = np.vstack([a[keep], b[keep]])
    k = table.shape[1]
    if k < 2:
        return Chi2Result(0.0, 0, 1.0)
    expected = table.sum(axis=1, keepdims=True) * table.sum(axis=0, keepdims=True) / table.sum()
    stat = float(((table - expected) ** 2 / expected).sum())
    dof = k - 1
    return Chi2Result(stat, dof, float(stats.chi2.sf(stat, dof)))
