"""Penalized distributional regression for GPD exceedances and lognormal losses.

Both distribution parameters get their own linear predictor on the same
design: categorical dummies (reference-level encoding), an intercept and an
optional natural cubic spline in time. For the GPD family the links are
``log mu`` and ``log tau``; for the lognormal family they are the identity
for the log-scale location and ``log sigma``.

The fitted objective is

    loglik(b) - gamma_mu * int h_mu''(s)^2 ds - gamma_tau * int h_tau''(s)^2 ds

with time ``s`` rescaled to ``[0, 1]`` over the training years. The roughness
integral is evaluated exactly through the quadratic form ``a' Omega a`` of the
spline coefficients ``a``.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

from .data_model import CONTAGION_LEVELS, Dataset
from .evt_gpd import FitError, gpd_fit_mle
from .scoring import PIT_EPS

log = logging.getLogger(__name__)

GPD = "GPD"
LOGNORMAL = "Lognormal"
FAMILIES = (GPD, LOGNORMAL)

ALL_TERMS = ("scheme", "sector", "emp_band", "rev_band", "us_flag", "contagion")
_COLUMN_OF = {"sector": "sector", "emp_band": "emp_band", "rev_band": "rev_band",
              "us_flag": "us_flag", "contagion": "contagion"}


class DesignWarning(UserWarning):
    """Design columns dropped, ridge fallback applied or unseen levels mapped."""


@dataclass(frozen=True)
class CovariateSpec:
    """Covariates and time-spline settings.

    ``n_knots``: 0 means no time effect, 2 a linear trend and ``K >= 3`` a
    natural cubic spline with ``K`` knots (``K - 1`` time columns).
    """

    terms: tuple = ALL_TERMS
    n_knots: int = 0
    penalty_grid: tuple = (1e-2, 1.0, 1e2)
    knot_grid: tuple = (0, 2, 3, 4, 5)
    ridge: float = 1e-4
    min_category: int = 5

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        unknown = set(self.terms) - set(ALL_TERMS)
        if unknown:
            raise ValueError(f"unknown covariate terms {sorted(unknown)}")
        if self.n_knots < 0 or self.n_knots == 1:
            raise ValueError("n_knots must be 0, 2 or larger")
        if not self.penalty_grid or min(self.penalty_grid) <= 0:
            raise ValueError("penalty_grid must hold positive values")

    def with_knots(self, k):
        return CovariateSpec(self.terms, k, self.penalty_grid, self.knot_grid, self.ridge, self.min_category)


# --------------------------------------------------------------------------
# natural cubic splines
# --------------------------------------------------------------------------

def place_knots(s, n_knots):
    """Knots at equally spaced quantiles of ``s``, duplicates removed."""
    if n_knots == 0:
        return ()
    knots = np.unique(np.quantile(np.asarray(s, float), np.linspace(0, 1, n_knots)))
    if knots.size < 2:
        return ()
    return tuple(float(k) for k in knots)


def spline_basis(s, knots):
    """Natural cubic spline columns (without intercept) at ``s``.

    Two knots give the single linear column ``s``. With ``K >= 3`` knots the
    columns are ``s`` and ``d_k - d_{K-1}`` for ``k = 1..K-2`` where
    ``d_k = ((s - x_k)_+^3 - (s - x_K)_+^3) / (x_K - x_k)``. The functions are
    linear beyond the boundary knots.
    """
    s = np.asarray(s, dtype=float)
    k = len(knots)
    if k == 0:
        return np.zeros((s.size, 0))
    cols = [s]
    if k >= 3:
        xi = np.asarray(knots)

        def d(j):
            return (np.maximum(s - xi[j], 0) ** 3 - np.maximum(s - xi[-1], 0) ** 3) / (xi[-1] - xi[j])

        last = d(k - 2)
        cols += [d(j) - last for j in range(k - 2)]
    return np.column_stack(cols)


def spline_second_derivative(s, knots):
    s = np.asarray(s, dtype=float)
    k = len(knots)
    if k < 3:
        return np.zeros((s.size, max(k - 1, 0)))
    xi = np.asarray(knots)

    def d2(j):
        return 6.0 * (np.maximum(s - xi[j], 0) - np.maximum(s - xi[-1], 0)) / (xi[-1] - xi[j])

    last = d2(k - 2)
    return np.column_stack([np.zeros_like(s)] + [d2(j) - last for j in range(k - 2)])


def roughness_matrix(knots):
    """``Omega`` with ``a' Omega a = int h''(s)^2 ds`` for ``h = basis @ a``.

    Second derivatives are piecewise linear between knots and vanish outside
    them, so the integral is exact per segment.
    """
    k = len(knots)
    if k < 3:
        return np.zeros((max(k - 1, 0),) * 2)
    f = spline_second_derivative(np.asarray(knots), knots)
    omega = np.zeros((k - 1, k - 1))
    for j in range(k - 1):
        h = knots[j + 1] - knots[j]
        fa, fb = f[j], f[j + 1]
        omega += h / 6.0 * (2 * np.outer(fa, fa) + np.outer(fa, fb) + np.outer(fb, fa) + 2 * np.outer(fb, fb))
    return omega


# --------------------------------------------------------------------------
# design
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DesignInfo:
    """Everything needed to rebuild design rows for new events."""

    terms: tuple
    levels: dict  # term -> tuple of levels (first is the reference)
    columns: tuple  # kept non-time column names, intercept first
    year_range: tuple  # (first, last) training years for time scaling
    scheme_name: str | None = None

    def to_dict(self):
        return {"terms": list(self.terms), "levels": {k: list(v) for k, v in self.levels.items()},
                "columns": list(self.columns), "year_range": list(self.year_range),
                "scheme_name": self.scheme_name}

    @classmethod
    def from_dict(cls, d):
        levels = {k: tuple(v) for k, v in d["levels"].items()}
        return cls(tuple(d["terms"]), levels, tuple(d["columns"]), tuple(d["year_range"]), d.get("scheme_name"))


@dataclass(frozen=True, eq=False)
class Design:
    X: np.ndarray
    years: np.ndarray
    info: DesignInfo
    dropped: tuple = ()
    sparse_columns: tuple = ()

    @property
    def n(self):
        return self.X.shape[0]

    def time(self):
        return scaled_time(self.years, self.info.year_range)

    def subset(self, mask):
        mask = np.asarray(mask, dtype=bool)
        return Design(self.X[mask], self.years[mask], self.info, self.dropped, self.sparse_columns)


def scaled_time(years, year_range):
    lo, hi = year_range
    return (np.asarray(years, float) - lo) / (hi - lo if hi > lo else 1.0)


def _term_values(d: Dataset, term, assignment):
    if term == "scheme":
        if assignment is None:
            return None
        return np.asarray(assignment.for_dataset(d), dtype=object)
    vals = getattr(d, _COLUMN_OF[term])
    if term == "contagion":
        return np.asarray([CONTAGION_LEVELS[int(v)] for v in vals], dtype=object)
    if term == "us_flag":
        return np.asarray(["1" if v else "0" for v in vals], dtype=object)
    return np.asarray([str(v) for v in vals], dtype=object)


def _dummy_block(values, levels):
    return np.column_stack([values == lv for lv in levels[1:]]).astype(float) if len(levels) > 1 \
        else np.zeros((len(values), 0))


def _independent_columns(X, tol=1e-9):
    """Greedy first-kept selection of linearly independent columns."""
    keep = []
    basis = np.zeros((X.shape[0], 0))
    for j in range(X.shape[1]):
        col = X[:, j]
        norm = np.linalg.norm(col)
        if norm == 0:
            continue
        resid = col - basis @ (basis.T @ col) if basis.shape[1] else col
        if np.linalg.norm(resid) > tol * max(norm, 1.0) * math.sqrt(X.shape[0]):
            keep.append(j)
            basis = np.column_stack([basis, resid / np.linalg.norm(resid)])
    return keep


def build_design(d: Dataset, spec: CovariateSpec, assignment=None, extra_columns=None) -> Design:
    """Design matrix with an intercept and reference-coded dummies.

    The scheme term uses the assignment's vocabulary order, so its first
    category present in ``d`` is the reference; other categorical terms use
    their sorted levels. Events the assignment excludes must be removed from
    ``d`` beforehand. Empty and collinear columns are dropped (first kept)
    with a :class:`DesignWarning`. ``extra_columns`` maps names to arrays and
    is appended as-is, mainly for rank-check diagnostics.
    """
    n = len(d)
    names = ["(Intercept)"]
    blocks = [np.ones((n, 1))]
    levels = {}
    for term in spec.terms:
        vals = _term_values(d, term, assignment)
        if vals is None:
            continue
        if term == "scheme":
            if any(v is None for v in vals):
                raise ValueError("assignment excludes some events of the dataset; subset the dataset first")
            present = set(vals)
            lv = tuple(c for c in assignment.categories if c in present)
            empty = [c for c in assignment.categories if c not in present]
            if empty:
                warnings.warn(f"categories without events dropped from design: {empty}", DesignWarning)
        else:
            lv = tuple(sorted(set(vals)))
        levels[term] = lv
        blocks.append(_dummy_block(vals, lv))
        names += [f"{term}[{v}]" for v in lv[1:]]
    for name, col in (extra_columns or {}).items():
        blocks.append(np.asarray(col, float).reshape(n, 1))
        names.append(name)
    X = np.hstack(blocks)
    keep = _independent_columns(X) if n else list(range(X.shape[1]))
    dropped = tuple(names[j] for j in range(X.shape[1]) if j not in keep)
    if dropped:
        warnings.warn(f"collinear or empty design columns dropped: {list(dropped)}", DesignWarning)
        log.info("design columns dropped: %s", dropped)
    X = X[:, keep]
    cols = tuple(names[j] for j in keep)
    counts = X[:, 1:].sum(axis=0)
    sparse = tuple(c for c, k in zip(cols[1:], counts) if "[" in c and k < spec.min_category)
    span = (int(d.year.min()), int(d.year.max())) if n else (0, 0)
    info = DesignInfo(tuple(spec.terms), levels, cols, span,
                      None if assignment is None else assignment.scheme_name)
    return Design(X, d.year.astype(float), info, dropped, sparse)


def design_rows(info: DesignInfo, d: Dataset, assignment=None):
    """Rows for new events on a fitted design; unseen levels fall back to the reference.

    Returns ``(X, unseen)`` where ``unseen`` lists ``(term, level)`` pairs.
    """
    n = len(d)
    cols = {"(Intercept)": np.ones(n)}
    unseen = []
    for term, lv in info.levels.items():
        vals = _term_values(d, term, assignment)
        if vals is None:
            raise ValueError(f"model uses term {term!r}; an assignment is required")
        known = set(lv)
        for v in sorted({v for v in vals if v not in known}, key=str):
            unseen.append((term, v))
        for level in lv[1:]:
            cols[f"{term}[{level}]"] = (vals == level).astype(float)
    if unseen:
        msg = f"unseen levels mapped to reference: {unseen}"
        warnings.warn(msg, DesignWarning)
        log.info(msg)
    X = np.column_stack([cols[c] for c in info.columns]) if n else np.zeros((0, len(info.columns)))
    return X, unseen


# --------------------------------------------------------------------------
# likelihood kernels
# --------------------------------------------------------------------------

def _gpd_terms(y, eta1, eta2, observed=True):
    mu, tau = np.exp(eta1), np.exp(eta2)
    z = y / mu
    l1p = np.log1p(z)
    w = z / (1.0 + z)
    ll = eta2 - eta1 - (1.0 + tau) * l1p
    g1 = -1.0 + (1.0 + tau) * w
    g2 = 1.0 - tau * l1p
    if observed:
        h11 = -(1.0 + tau) * w * (1.0 - w)
        h22 = -tau * l1p
        h12 = tau * w
    else:
        h11 = -tau / (tau + 2.0)
        h22 = -np.ones_like(tau)
        h12 = tau / (tau + 1.0)
        h11 = np.broadcast_to(h11, y.shape)
        h12 = np.broadcast_to(h12, y.shape)
    return ll, g1, g2, h11, h12, h22


def _lognormal_terms(y, eta1, eta2, observed=True):
    ly = np.log(y)
    sigma = np.exp(eta2)
    e = (ly - eta1) / sigma
    ll = -eta2 - 0.5 * e * e - 0.5 * math.log(2 * math.pi) - ly
    g1 = e / sigma
    g2 = -1.0 + e * e
    if observed:
        h11 = -1.0 / sigma ** 2
        h22 = -2.0 * e * e
        h12 = -2.0 * e / sigma
    else:
        h11 = -1.0 / sigma ** 2
        h22 = np.full_like(y, -2.0)
        h12 = np.zeros_like(y)
    return ll, g1, g2, h11, h12, h22


_KERNELS = {GPD: _gpd_terms, LOGNORMAL: _lognormal_terms}


class PenalizedObjective:
    """Penalized log-likelihood over the stacked coefficients ``[b1, b2]``.

    ``Z`` is the full per-parameter design (covariates then time columns) and
    ``P1``, ``P2`` the penalty matrices, so the objective is
    ``loglik - b1' P1 b1 - b2' P2 b2``.
    """

    def __init__(self, family, y, Z, P1, P2):
        if family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        self.family = family
        self.y = np.asarray(y, dtype=float)
        self.Z = np.asarray(Z, dtype=float)
        self.P1 = P1
        self.P2 = P2
        self.q = self.Z.shape[1]
        self._kernel = _KERNELS[family]

    def _split(self, b):
        b = np.asarray(b, dtype=float)
        return b[: self.q], b[self.q:]

    def _terms(self, b, observed=True):
        b1, b2 = self._split(b)
        # trial steps may overflow; the line search rejects non-finite values
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            return self._kernel(self.y, self.Z @ b1, self.Z @ b2, observed)

    def penalty(self, b):
        b1, b2 = self._split(b)
        return float(b1 @ self.P1 @ b1 + b2 @ self.P2 @ b2)

    def loglik(self, b):
        return float(np.sum(self._terms(b)[0]))

    def value(self, b):
        return self.loglik(b) - self.penalty(b)

    def gradient(self, b):
        b1, b2 = self._split(b)
        _, g1, g2, *_ = self._terms(b)
        return np.concatenate([self.Z.T @ g1 - 2 * self.P1 @ b1, self.Z.T @ g2 - 2 * self.P2 @ b2])

    def information(self, b, observed=True):
        """Negative Hessian of the log-likelihood (penalty excluded)."""
        _, _, _, h11, h12, h22 = self._terms(b, observed)
        Z = self.Z
        a = -(Z.T * h11) @ Z
        c = -(Z.T * h12) @ Z
        e = -(Z.T * h22) @ Z
        return np.block([[a, c], [c.T, e]])

    def penalty_matrix(self):
        return linalg.block_diag(2 * self.P1, 2 * self.P2)


# --------------------------------------------------------------------------
# fitted model
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FittedSeverityModel:
    """Penalized fit; for the lognormal family ``beta_mu``/``spline_mu`` hold the
    log-scale location and ``beta_tau``/``spline_tau`` the ``log sigma`` link."""

    family: str
    threshold: float
    design: DesignInfo
    beta_mu: np.ndarray
    beta_tau: np.ndarray
    knots: tuple
    spline_mu: np.ndarray
    spline_tau: np.ndarray
    gamma_mu: float
    gamma_tau: float
    loglik: float
    pen_loglik: float
    edf: float
    aic: float
    n_obs: int
    grad_norm: float
    iterations: int
    notes: tuple = ()
    trace: tuple = field(default=(), repr=False)

    def __eq__(self, other):
        if not isinstance(other, FittedSeverityModel):
            return NotImplemented
        return self.to_json() == other.to_json()

    @property
    def coef_mu(self):
        return dict(zip(self.design.columns, self.beta_mu.tolist()))

    @property
    def coef_tau(self):
        return dict(zip(self.design.columns, self.beta_tau.tolist()))

    def time_effect(self, years, which="mu"):
        s = scaled_time(years, self.design.year_range)
        a = self.spline_mu if which == "mu" else self.spline_tau
        return spline_basis(s, self.knots) @ a if len(self.knots) else np.zeros(np.size(s))

    def to_dict(self):
        return {
            "family": self.family,
            "threshold": self.threshold,
            "design": self.design.to_dict(),
            "beta_mu": self.beta_mu.tolist(),
            "beta_tau": self.beta_tau.tolist(),
            "knots": list(self.knots),
            "spline_mu": self.spline_mu.tolist(),
            "spline_tau": self.spline_tau.tolist(),
            "gamma_mu": self.gamma_mu,
            "gamma_tau": self.gamma_tau,
            "loglik": self.loglik,
            "pen_loglik": self.pen_loglik,
            "edf": self.edf,
            "aic": self.aic,
            "n_obs": self.n_obs,
            "grad_norm": self.grad_norm,
            "iterations": self.iterations,
            "notes": list(self.notes),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        return cls(
            family=d["family"], threshold=d["threshold"], design=DesignInfo.from_dict(d["design"]),
            beta_mu=np.asarray(d["beta_mu"], float), beta_tau=np.asarray(d["beta_tau"], float),
            knots=tuple(d["knots"]), spline_mu=np.asarray(d["spline_mu"], float),
            spline_tau=np.asarray(d["spline_tau"], float), gamma_mu=d["gamma_mu"], gamma_tau=d["gamma_tau"],
            loglik=d["loglik"], pen_loglik=d["pen_loglik"], edf=d["edf"], aic=d["aic"], n_obs=d["n_obs"],
            grad_norm=d["grad_norm"], iterations=d["iterations"], notes=tuple(d.get("notes", ())),
        )


def _full_design(design: Design, knots):
    return np.hstack([design.X, spline_basis(design.time(), knots)])


def _penalty(design: Design, knots, gamma, spec):
    p = design.X.shape[1]
    omega = roughness_matrix(knots)
    q = p + omega.shape[0]
    P = np.zeros((q, q))
    P[p:, p:] = gamma * omega
    for j, name in enumerate(design.info.columns):
        if name in design.sparse_columns:
            P[j, j] += spec.ridge
    return P


def _start(family, y, q):
    b1 = np.zeros(q)
    b2 = np.zeros(q)
    if family == GPD:
        try:
            f = gpd_fit_mle(y)
            b1[0], b2[0] = math.log(float(f.params.mu)), math.log(float(f.params.tau))
        except FitError:
            b1[0], b2[0] = math.log(float(np.mean(y))), 0.0
    else:
        ly = np.log(y)
        b1[0] = float(np.mean(ly))
        b2[0] = math.log(max(float(np.std(ly)), 1e-3))
    return np.concatenate([b1, b2])


def _solve(obj: PenalizedObjective, b0, max_iter=200, tol=1e-5):
    """Newton ascent with step halving.

    Each step uses the observed information when the penalized negative
    Hessian is positive definite and Fisher scoring otherwise. Returns the
    optimum, the trace of penalized log-likelihoods and the iteration count.
    """
    n = obj.y.size
    b = b0.copy()
    val = obj.value(b)
    if not np.isfinite(val):
        raise FitError("log-likelihood not finite at the starting point")
    trace = [val]
    P2 = obj.penalty_matrix()
    for it in range(1, max_iter + 1):
        g = obj.gradient(b)
        gnorm = float(np.max(np.abs(g))) / n
        if gnorm < 1e-10:
            return b, trace, it - 1, gnorm
        step = None
        for observed in (True, False):
            M = obj.information(b, observed) + P2
            try:
                cf = linalg.cho_factor(M)
            except linalg.LinAlgError:
                continue
            step = linalg.cho_solve(cf, g)
            break
        if step is None:
            step = g / max(np.max(np.abs(g)), 1.0)
        t = 1.0
        while True:
            cand = b + t * step
            new = obj.value(cand)
            if np.isfinite(new) and new >= val - 1e-12 * abs(val):
                break
            t *= 0.5
            if t < 1e-10:
                new = val
                cand = b
                break
        improvement = new - val
        b, val = cand, new
        trace.append(val)
        if t < 1e-10 or (abs(improvement) <= 1e-14 * max(1.0, abs(val)) and it > 1):
            gnorm = float(np.max(np.abs(obj.gradient(b)))) / n
            if gnorm < tol:
                return b, trace, it, gnorm
            raise FitError(f"line search stalled with scaled gradient {gnorm:.3g}", trace)
    gnorm = float(np.max(np.abs(obj.gradient(b)))) / n
    if gnorm < tol:
        return b, trace, max_iter, gnorm
    raise FitError(f"no convergence after {max_iter} iterations (scaled gradient {gnorm:.3g})", trace)


def _fit_once(y, design: Design, spec: CovariateSpec, family, knots, gamma_mu, gamma_tau, threshold, b0=None):
    Z = _full_design(design, knots)
    P1 = _penalty(design, knots, gamma_mu, spec)
    P2 = _penalty(design, knots, gamma_tau, spec)
    obj = PenalizedObjective(family, y, Z, P1, P2)
    start = _start(family, y, Z.shape[1]) if b0 is None else b0
    b, trace, iters, gnorm = _solve(obj, start)
    ll = obj.loglik(b)
    info = obj.information(b, observed=False)
    M = info + obj.penalty_matrix()
    # pseudo-inverse: directions left flat by the likelihood (a category drifting to the
    # exponential limit identifies only mu/tau) contribute no degrees of freedom
    edf = float(np.trace(np.linalg.pinv(M, hermitian=True) @ info))
    p = design.X.shape[1]
    q = Z.shape[1]
    b1, b2 = b[:q], b[q:]
    notes = []
    if design.sparse_columns:
        notes.append(f"ridge {spec.ridge:g} on sparse columns {list(design.sparse_columns)}")
    if design.dropped:
        notes.append(f"dropped columns {list(design.dropped)}")
    return FittedSeverityModel(
        family=family, threshold=float(threshold), design=design.info,
        beta_mu=b1[:p].copy(), beta_tau=b2[:p].copy(), knots=tuple(knots),
        spline_mu=b1[p:].copy(), spline_tau=b2[p:].copy(),
        gamma_mu=float(gamma_mu), gamma_tau=float(gamma_tau),
        loglik=ll, pen_loglik=float(trace[-1]), edf=edf, aic=-2 * ll + 2 * edf,
        n_obs=int(y.size), grad_norm=gnorm, iterations=iters, notes=tuple(notes), trace=tuple(trace),
    )


def _check_inputs(y, design, family):
    y = np.asarray(y, dtype=float).ravel()
    if y.size != design.n:
        raise ValueError("response and design rows differ in length")
    if np.any(~(y > 0)) or not np.all(np.isfinite(y)):
        raise ValueError(f"{family} responses must be finite and strictly positive")
    if y.size < max(10, design.X.shape[1] + 2):
        raise FitError(f"too few observations ({y.size}) for {design.X.shape[1]} columns")
    if design.sparse_columns:
        msg = f"categories with < 5 observations get a ridge penalty: {list(design.sparse_columns)}"
        warnings.warn(msg, DesignWarning)
        log.info(msg)
    return y


def _fit_family(y, design, spec, family, threshold, gamma):
    y = _check_inputs(y, design, family)
    knots = place_knots(design.time(), spec.n_knots)
    if len(knots) < 3:
        return _fit_once(y, design, spec, family, knots, 0.0, 0.0, threshold)
    if gamma is not None:
        g_mu, g_tau = (gamma, gamma) if np.isscalar(gamma) else gamma
        return _fit_once(y, design, spec, family, knots, g_mu, g_tau, threshold)
    best = None
    for g_mu in spec.penalty_grid:
        for g_tau in spec.penalty_grid:
            m = _fit_once(y, design, spec, family, knots, g_mu, g_tau, threshold)
            if best is None or m.aic < best.aic:
                best = m
    return best


def fit(exceedances, design: Design, spec: CovariateSpec, threshold=0.0, gamma=None) -> FittedSeverityModel:
    """Penalized GPD fit of exceedances ``y - u`` on ``design``.

    ``spec.n_knots`` fixes the spline; the smoothing parameters are taken
    from ``gamma`` (a scalar or a ``(gamma_mu, gamma_tau)`` pair) or, when it
    is ``None``, chosen by AIC over ``spec.penalty_grid`` for both links.

    Raises
    ------
    FitError
        On non-convergence; the exception carries the iteration trace.
    """
    return _fit_family(exceedances, design, spec, GPD, threshold, gamma)


def fit_lognormal(losses, design: Design, spec: CovariateSpec, gamma=None) -> FittedSeverityModel:
    """Penalized lognormal fit: location and ``log sigma`` regressions for ``log y``."""
    return _fit_family(losses, design, spec, LOGNORMAL, 0.0, gamma)


@dataclass(frozen=True)
class KnotSelection:
    model: FittedSeverityModel
    n_knots: int
    path: tuple  # (n_knots, gamma_mu, gamma_tau, aic) for every fit


def select_knots_aic(y, design: Design, spec: CovariateSpec, knot_grid=None, family=GPD, threshold=0.0):
    """Knot count (and smoothing parameters) minimizing AIC over ``knot_grid``.

    Grid entries whose deduplicated knot set coincides with an earlier entry
    are fitted once. Failed fits enter the path with ``aic = inf``.
    """
    grid = tuple(spec.knot_grid if knot_grid is None else knot_grid)
    if not grid:
        raise ValueError("knot_grid must be nonempty")
    y = _check_inputs(y, design, family)
    path = []
    best = None
    seen = {}
    for k in grid:
        knots = place_knots(design.time(), k)
        if knots in seen:
            m = seen[knots]
            path.append((k, m.gamma_mu, m.gamma_tau, m.aic) if m else (k, None, None, math.inf))
            if m is not None and (best is None or m.aic < best[0].aic):
                best = (m, k)
            continue
        gammas = [(g1, g2) for g1 in spec.penalty_grid for g2 in spec.penalty_grid] if len(knots) >= 3 \
            else [(0.0, 0.0)]
        local = None
        for g1, g2 in gammas:
            try:
                m = _fit_once(y, design, spec, family, knots, g1, g2, threshold)
            except FitError:
                path.append((k, g1, g2, math.inf))
                continue
            path.append((k, g1, g2, m.aic))
            if local is None or m.aic < local.aic:
                local = m
        seen[knots] = local
        if local is not None and (best is None or local.aic < best[0].aic):
            best = (local, k)
    if best is None:
        raise FitError("every candidate spline configuration failed to fit")
    return KnotSelection(best[0], best[1], tuple(path))


# --------------------------------------------------------------------------
# prediction and residuals
# --------------------------------------------------------------------------

def linear_predictors(m: FittedSeverityModel, d: Dataset, assignment=None):
    X, _ = design_rows(m.design, d, assignment)
    eta1 = X @ m.beta_mu + m.time_effect(d.year, "mu")
    eta2 = X @ m.beta_tau + m.time_effect(d.year, "tau")
    return eta1, eta2


def predict_params(m: FittedSeverityModel, d: Dataset, assignment=None):
    """Per-row ``(mu, tau)`` for the GPD family, ``(location, sigma)`` for the lognormal.

    Years outside the training span use the spline's linear extension.
    """
    eta1, eta2 = linear_predictors(m, d, assignment)
    if m.family == GPD:
        return np.exp(eta1), np.exp(eta2)
    return eta1, np.exp(eta2)


def model_cdf(m: FittedSeverityModel, d: Dataset, assignment=None):
    """Fitted CDF at each event's response.

    GPD: evaluated at ``loss - u`` and only meaningful for exceedances (see
    :func:`exceedance_mask`); lognormal: evaluated at the loss.
    """
    a, b = predict_params(m, d, assignment)
    if m.family == GPD:
        y = np.maximum(d.loss - m.threshold, 0.0)
        return -np.expm1(-b * np.log1p(y / a))
    return stats.norm.cdf((np.log(d.loss) - a) / b)


def exceedance_mask(m: FittedSeverityModel, d: Dataset):
    if m.family == GPD:
        return d.loss > m.threshold
    return d.loss > 0


def residuals(m: FittedSeverityModel, d: Dataset, assignment=None):
    """Normalized residuals ``Phi^{-1}(G(y))`` for the events of :func:`exceedance_mask`.

    ``G`` is clamped to ``[1e-12, 1 - 1e-12]`` first, so residuals are finite.
    """
    mask = exceedance_mask(m, d)
    sub = d.subset(mask)
    p = model_cdf(m, sub, assignment)
    return stats.norm.ppf(np.clip(p, PIT_EPS, 1.0 - PIT_EPS))
