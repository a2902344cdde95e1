"""Generalized Pareto kernels, maximum likelihood and bootstrap threshold selection.

The exceedance law is parameterized by a scale-like ``mu`` and a tail index
``tau`` (Lomax form)::

    g(y; mu, tau) = (tau / mu) * (1 + y / mu) ** -(1 + tau),   y >= 0
    G(y; mu, tau) = 1 - (1 + y / mu) ** -tau

so that the survival function decays like ``y ** -tau`` and moments of order
``k`` exist only for ``k < tau``. In the usual ``(sigma, xi)`` GPD notation this
is ``xi = 1 / tau`` and ``sigma = mu / tau``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FitError",
    "GpdFit",
    "GpdParams",
    "NoValidThresholdError",
    "ThresholdResult",
    "anderson_darling",
    "default_candidate_quantiles",
    "gpd_cdf",
    "gpd_fit_mle",
    "gpd_logpdf",
    "gpd_pdf",
    "gpd_quantile",
    "gpd_sample",
    "gpd_sf",
    "select_threshold",
]


class FitError(RuntimeError):
    """Raised when a likelihood fit fails; ``trace`` holds the iteration history."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


@dataclass(frozen=True)
class GpdParams:
    """GPD parameters. ``mu`` and ``tau`` may be scalars or broadcastable arrays."""

    mu: float | np.ndarray
    tau: float | np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        tau = np.asarray(self.tau, dtype=float)
        if np.any(~(mu > 0)) or np.any(~(tau > 0)):
            raise ValueError("GPD parameters require mu > 0 and tau > 0")

    def has_moment(self, order):
        """True where ``E[X**order]`` is finite, i.e. ``order < tau``."""
        return np.asarray(self.tau) > order


def _mt(p):
    return np.asarray(p.mu, dtype=float), np.asarray(p.tau, dtype=float)


def gpd_logpdf(y, p: GpdParams):
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ValueError("GPD density is defined for y >= 0")
    mu, tau = _mt(p)
    return np.log(tau) - np.log(mu) - (1.0 + tau) * np.log1p(y / mu)


def gpd_pdf(y, p: GpdParams):
    """Density of the exceedance law; raises ``ValueError`` for negative ``y``."""
    return np.exp(gpd_logpdf(y, p))


def gpd_sf(y, p: GpdParams):
    y = np.maximum(np.asarray(y, dtype=float), 0.0)
    mu, tau = _mt(p)
    return np.exp(-tau * np.log1p(y / mu))


def gpd_cdf(y, p: GpdParams):
    y = np.maximum(np.asarray(y, dtype=float), 0.0)
    mu, tau = _mt(p)
    return -np.expm1(-tau * np.log1p(y / mu))


def gpd_quantile(q, p: GpdParams):
    q = np.asarray(q, dtype=float)
    if np.any((q <= 0) | (q >= 1)):
        raise ValueError("quantile level must lie in (0, 1)")
    mu, tau = _mt(p)
    return mu * np.expm1(-np.log1p(-q) / tau)


def gpd_sample(p: GpdParams, n, seed=None):
    """Inverse-transform sample of size ``n`` (``seed`` may be a Generator)."""
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    mu, tau = _mt(p)
    return mu * np.expm1(-np.log1p(-u) / tau)


# --------------------------------------------------------------------------
# maximum likelihood
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GpdFit:
    params: GpdParams
    se_mu: float
    se_tau: float
    loglik: float
    grad_norm: float
    n_obs: int
    boundary: bool = False


def _profile_terms(y, theta):
    """Sums needed by the profile likelihood in ``theta = log(mu)``.

    ``y`` has shape (B, m) and ``theta`` shape (B,). Returns S, W, V with
    S = sum log1p(y/mu), W = sum w, V = sum w(1-w), w = y / (mu + y).
    """
    mu = np.exp(theta)[:, None]
    z = y / mu
    s = np.log1p(z).sum(axis=1)
    w = z / (1.0 + z)
    return s, w.sum(axis=1), (w * (1.0 - w)).sum(axis=1)


def _profile_loglik(n, s, theta):
    return n * np.log(n / s) - n * theta - s - n


def _fit_lomax_batch(y, n_grid=24, max_iter=60, tol=1e-12):
    """Vectorized Lomax MLE for each row of ``y`` (shape (B, m), all > 0).

    Profiles out ``tau`` (``tau_hat = m / S(mu)``) and solves the score
    equation in ``log mu`` by a grid search followed by bracketed Newton.
    Returns ``(mu, tau, boundary)``; ``boundary`` flags rows whose likelihood
    increases towards the exponential limit (mu, tau -> inf).
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    b, n = y.shape
    ymin = y.min(axis=1)
    ymax = y.max(axis=1)
    lo = np.log(ymin) - 6.0
    hi = np.log(ymax) + 12.0
    grid = lo[:, None] + (hi - lo)[:, None] * np.linspace(0.0, 1.0, n_grid)[None, :]
    prof = np.empty((b, n_grid))
    for k in range(n_grid):
        s, _, _ = _profile_terms(y, grid[:, k])
        prof[:, k] = _profile_loglik(n, s, grid[:, k])
    kbest = prof.argmax(axis=1)
    rows = np.arange(b)
    boundary = kbest == n_grid - 1
    a = grid[rows, np.maximum(kbest - 1, 0)]
    c = grid[rows, np.minimum(kbest + 1, n_grid - 1)]
    theta = grid[rows, kbest]
    for _ in range(max_iter):
        s, w, v = _profile_terms(y, theta)
        g = n * w / s - n + w
        gp = n * (w * w - v * s) / (s * s) - v
        # score is positive left of the maximum, negative right of it
        a = np.where(g > 0, theta, a)
        c = np.where(g <= 0, theta, c)
        step = np.where(gp < 0, -g / np.where(gp < 0, gp, -1.0), 0.0)
        cand = theta + step
        bad = (gp >= 0) | (cand <= a) | (cand >= c)
        new = np.where(bad, 0.5 * (a + c), cand)
        new = np.where(boundary, theta, new)
        done = np.abs(g) / n < tol
        theta = np.where(done, theta, new)
        if np.all(done | boundary):
            break
    s, _, _ = _profile_terms(y, theta)
    return np.exp(theta), n / s, boundary


def gpd_fit_mle(sample) -> GpdFit:
    """Maximum likelihood fit of the exceedance law to a positive sample.

    Raises
    ------
    FitError
        For fewer than 10 observations, a degenerate (constant) sample, or a
        likelihood that keeps increasing towards the exponential limit.
    """
    y = np.asarray(sample, dtype=float).ravel()
    if y.size < 10:
        raise FitError("at least 10 observations are required")
    if np.any(~np.isfinite(y)) or np.any(y <= 0):
        raise FitError("sample must be strictly positive and finite")
    if np.ptp(y) == 0:
        raise FitError("degenerate likelihood: constant sample")
    mu, tau, boundary = _fit_lomax_batch(y[None, :])
    mu, tau = float(mu[0]), float(tau[0])
    theta = np.log(mu)
    s, w, v = (float(t[0]) for t in _profile_terms(y[None, :], np.array([theta])))
    n = y.size
    grad = n * w / s - n + w
    trace = [{"mu": mu, "tau": tau, "score": grad}]
    if boundary[0]:
        raise FitError("likelihood maximized at the exponential limit (tau -> inf)", trace)
    loglik = n * np.log(tau) - n * theta - (1.0 + tau) * s
    # observed information in (log mu, log tau)
    h = np.array([[(1.0 + tau) * v, -tau * w], [-tau * w, tau * s]])
    try:
        cov = np.linalg.inv(h)
    except np.linalg.LinAlgError as exc:
        raise FitError("singular information matrix", trace) from exc
    if not np.all(np.isfinite(cov)) or cov[0, 0] <= 0 or cov[1, 1] <= 0:
        raise FitError("information matrix is not positive definite", trace)
    return GpdFit(
        params=GpdParams(mu, tau),
        se_mu=mu * float(np.sqrt(cov[0, 0])),
        se_tau=tau * float(np.sqrt(cov[1, 1])),
        loglik=float(loglik),
        grad_norm=abs(grad) / n,
        n_obs=n,
    )


# --------------------------------------------------------------------------
# goodness of fit and threshold selection
# --------------------------------------------------------------------------

def anderson_darling(y, mu, tau):
    """Anderson-Darling statistic of each row of ``y`` against GPD(mu, tau).

    ``y`` has shape (B, m) or (m,); ``mu`` and ``tau`` broadcast over rows.
    """
    y = np.sort(np.atleast_2d(np.asarray(y, dtype=float)), axis=1)
    m = y.shape[1]
    mu = np.asarray(mu, dtype=float).reshape(-1, 1)
    tau = np.asarray(tau, dtype=float).reshape(-1, 1)
    logsf = -tau * np.log1p(y / mu)
    logcdf = np.log(np.maximum(-np.expm1(logsf), 1e-300))
    i = np.arange(1, m + 1)
    terms = (2 * i - 1) * (logcdf + logsf[:, ::-1])
    return -m - terms.sum(axis=1) / m


def _bootstrap_pvalue(x, n_boot, rng):
    mu, tau, _ = _fit_lomax_batch(x[None, :])
    a_obs = anderson_darling(x, mu, tau)[0]
    u = rng.random((n_boot, x.size))
    sims = mu[0] * np.expm1(-np.log1p(-u) / tau[0])
    mu_b, tau_b, _ = _fit_lomax_batch(sims)
    a_b = anderson_darling(sims, mu_b, tau_b)
    return (1.0 + np.count_nonzero(a_b >= a_obs)) / (n_boot + 1.0)


class NoValidThresholdError(RuntimeError):
    """No candidate threshold passed the GoF test; ``result`` carries the p-value path."""

    def __init__(self, result):
        super().__init__("no candidate threshold accepted the GPD hypothesis")
        self.result = result


@dataclass(frozen=True)
class ThresholdResult:
    u: float | None
    quantile: float | None
    pvalues: list = field(default_factory=list)
    level: float = 0.05

    def select(self, level):
        """Re-select from the stored path with a different acceptance cutoff."""
        for q, p in self.pvalues:
            if np.isfinite(p) and p >= level:
                return q
        return None

    def to_dict(self):
        return {
            "u": self.u,
            "quantile": self.quantile,
            "pvalues": [{"q": q, "p": (None if not np.isfinite(p) else p)} for q, p in self.pvalues],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        path = [(r["q"], np.nan if r["p"] is None else r["p"]) for r in d["pvalues"]]
        return cls(u=d["u"], quantile=d["quantile"], pvalues=path)


def default_candidate_quantiles():
    return np.round(np.arange(0.40, 0.9501, 0.01), 2)


def select_threshold(sample, candidate_quantiles=None, n_boot=500, seed=0, level=0.05,
                     min_exceedances=10, stop_at_first=False):
    """Lowest candidate quantile whose exceedances are not rejected as GPD.

    For each candidate quantile ``q`` the threshold is the empirical
    ``q``-quantile of ``sample``; the exceedances ``y - u`` over it are tested
    with a parametric-bootstrap Anderson-Darling test (fit, resample from the
    fit, refit). The selected threshold is the smallest ``q`` with bootstrap
    p-value ``>= level``.

    Each candidate draws from its own child of ``SeedSequence(seed)``, so the
    p-value path does not depend on evaluation order. With
    ``stop_at_first=True`` the path ends at the selected candidate.

    Raises
    ------
    NoValidThresholdError
        If no candidate is accepted; the exception carries the full path.
    """
    x = np.asarray(sample, dtype=float).ravel()
    grid = default_candidate_quantiles() if candidate_quantiles is None else np.asarray(candidate_quantiles, float)
    if np.any((grid <= 0) | (grid >= 1)) or np.any(np.diff(grid) <= 0):
        raise ValueError("candidate quantiles must be increasing and inside (0, 1)")
    if n_boot < 200:
        raise ValueError("n_boot must be at least 200")
    children = np.random.SeedSequence(seed).spawn(len(grid))
    path = []
    chosen = None
    for q, child in zip(grid, children):
        u = float(np.quantile(x, q))
        exc = x[x > u] - u
        if exc.size < min_exceedances or np.ptp(exc) == 0:
            p = np.nan
        else:
            p = _bootstrap_pvalue(exc, n_boot, np.random.default_rng(child))
        path.append((float(q), float(p)))
        if chosen is None and np.isfinite(p) and p >= level:
            chosen = (float(q), u)
            if stop_at_first:
                break
    if chosen is None:
        raise NoValidThresholdError(ThresholdResult(None, None, path, level))
    return ThresholdResult(u=chosen[1], quantile=chosen[0], pvalues=path, level=level)
