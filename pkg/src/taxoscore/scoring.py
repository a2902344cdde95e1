"""Proper scoring rules for severity forecasts and their residual variants.

All scores here are oriented lower-is-better (a perfect point forecast scores
0). Flip the sign when a higher-is-better statement is wanted.

Weighting
---------
The threshold weights use the Cauchy (Student-t, one degree of freedom)
density ``t(z)`` and CDF ``T(z)``::

    EQUAL   u(z) = 1
    CENTER  u(z) = t(z)
    LEFT    u(z) = 1 - T(z)
    RIGHT   u(z) = T(z)

Each weight has a chaining function ``v`` with ``v' = u``. The weighted Brier
integral ``int (F(z) - 1{y <= z})**2 u(z) dz`` equals the kernel form
``E|v(X) - v(y)| - E|v(X) - v(X')| / 2``; raising the kernel distances to a
power ``beta`` gives the weighted energy score.

Residual scores
---------------
``r_crps`` and ``r_es`` only see the forecast PIT value ``p = F(y)``. It is
mapped to the residual scale ``r = R^{-1}(p)`` of a reference law ``R``
(standard normal by default) and scored against ``R``. The score is finite for
every forecast, including tail indices below one.
"""

from __future__ import annotations

import enum
import functools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special, stats

from .evt_gpd import GpdParams, gpd_cdf, gpd_quantile

__all__ = [
    "MomentConditionError",
    "PointMass",
    "RefDist",
    "ScoreKind",
    "ScoreSeries",
    "WeightKind",
    "chain",
    "crps",
    "energy_score",
    "pit_clip",
    "r_crps",
    "r_es",
    "residual",
    "tw_crps",
    "weight",
]

PIT_EPS = 1e-12


class WeightKind(str, enum.Enum):
    EQUAL = "Equal"
    CENTER = "Center"
    LEFT = "Left"
    RIGHT = "Right"


class RefDist(str, enum.Enum):
    NORMAL = "StandardNormal"
    LOGNORMAL = "Lognormal"
    SKEWNORMAL = "SkewNormal"

    @property
    def dist(self):
        return _REF_DISTS[self]


_REF_DISTS = {
    RefDist.NORMAL: stats.norm(),
    RefDist.LOGNORMAL: stats.lognorm(s=1.0),
    RefDist.SKEWNORMAL: stats.skewnorm(5.0),
}


class ScoreKind(str, enum.Enum):
    CRPS = "CRPS"
    TWCRPS = "twCRPS"
    ES = "ES"
    RCRPS = "rCRPS"
    RES = "rES"


class MomentConditionError(ValueError):
    """Energy score requested with ``beta`` at or above a forecast tail index."""


@dataclass(frozen=True)
class PointMass:
    at: float


def weight(kind, z):
    """Weight function ``u(z)``."""
    kind = WeightKind(kind)
    z = np.asarray(z, dtype=float)
    if kind is WeightKind.EQUAL:
        return np.ones_like(z)
    if kind is WeightKind.CENTER:
        return 1.0 / (np.pi * (1.0 + z * z))
    if kind is WeightKind.LEFT:
        return _cauchy_sf(z)
    return _cauchy_sf(-z)


def _cauchy_sf(z):
    # atan(1/z)/pi for z > 0 avoids cancellation far in the tail
    with np.errstate(divide="ignore"):
        return np.where(z > 0, np.arctan(1.0 / z) / np.pi, 0.5 - np.arctan(z) / np.pi)


def _weight_scalar(kind, z):
    z = float(z)
    if kind is WeightKind.EQUAL:
        return 1.0
    if kind is WeightKind.CENTER:
        return 0.0 if abs(z) > 1e150 else 1.0 / (math.pi * (1.0 + z * z))
    if kind is WeightKind.RIGHT:
        z = -z
    if z > 0:
        return 0.0 if math.isinf(z) else math.atan(1.0 / z) / math.pi
    return 0.5 - math.atan(z) / math.pi


def _right_chain(z):
    # int_0^z T(s) ds
    return 0.5 * z + (z * np.arctan(z) - 0.5 * np.log1p(z * z)) / np.pi


def chain(kind, z):
    """Chaining function ``v`` with ``v' = u`` (defined up to a constant)."""
    kind = WeightKind(kind)
    z = np.asarray(z, dtype=float)
    if kind is WeightKind.EQUAL:
        return z
    if kind is WeightKind.CENTER:
        return stats.cauchy.cdf(z)
    if kind is WeightKind.RIGHT:
        return _right_chain(z)
    return z - _right_chain(z)


def _linear_growth(kind):
    # chains growing linearly need E|X|^beta < inf; LEFT grows like log, CENTER is bounded
    return WeightKind(kind) in (WeightKind.EQUAL, WeightKind.RIGHT)


# --------------------------------------------------------------------------
# scores on the loss scale
# --------------------------------------------------------------------------

def _gpd_brier(mu, tau, y, kind):
    """Weighted Brier integral for one GPD forecast.

    Integrated in ``s = tau * log1p(z / mu)``, where ``F = 1 - exp(-s)`` and
    ``dz = (mu / tau) exp(s / tau) ds``: the lower piece is smooth on a finite
    interval and the upper piece decays like ``exp((1 / tau - 2) s)`` times the
    weight, on a unit scale whatever the size of ``mu`` and ``tau``.
    """
    mu, tau = float(mu), float(tau)
    if tau <= 0.5 and _linear_growth(kind):
        return math.inf
    sy = tau * math.log1p(y / mu)
    scale = mu / tau

    def z(s):
        return mu * math.expm1(s / tau) if s / tau < 700.0 else math.inf

    def low(s):
        f = -math.expm1(-s)
        return f * f * _weight_scalar(kind, z(s)) * scale * math.exp(s / tau)

    def high(s):
        w = _weight_scalar(kind, z(s))
        if w <= 0.0:
            return 0.0
        e = (1.0 / tau - 2.0) * s + math.log(w)  # log space: exp alone overflows for tau < 1/2
        return math.exp(e) * scale if e > -745.0 else 0.0

    lower = 0.0
    if sy > 0:
        lower, _ = integrate.quad(low, 0.0, sy, epsabs=1e-13, epsrel=1e-12, limit=400)
    upper, _ = integrate.quad(high, sy, math.inf, epsabs=1e-13, epsrel=1e-12, limit=400)
    return lower + upper


_GRID_STEP = 0.25  # widest Gauss-Legendre segment on the s scale
_SORTED_MIN = 64


def _gpd_brier_sorted(mu, tau, y, kind):
    """Weighted Brier integral of one GPD forecast at many outcomes ``y >= 0``.

    Same integrand as :func:`_gpd_brier`, accumulated along the sorted
    outcomes: both pieces become cumulative sums of Gauss-Legendre segments
    no wider than ``_GRID_STEP`` in ``s``, plus one quadrature for the far tail.
    """
    mu, tau = float(mu), float(tau)
    y = np.asarray(y, dtype=float)
    if tau <= 0.5 and _linear_growth(kind):
        return np.full(y.shape, math.inf)
    scale = mu / tau
    sy = tau * np.log1p(y / mu)
    top = float(sy.max())
    knots = np.union1d(np.arange(0.0, top, _GRID_STEP), sy)
    knots = np.union1d(knots, [0.0])

    def low(s):
        with np.errstate(over="ignore"):
            return np.square(-np.expm1(-s)) * weight(kind, mu * np.expm1(s / tau)) * scale * np.exp(s / tau)

    def high(s):
        with np.errstate(divide="ignore", over="ignore"):
            return scale * np.exp((1.0 / tau - 2.0) * s + np.log(weight(kind, mu * np.expm1(s / tau))))

    a, b = knots[:-1], knots[1:]
    lower = np.concatenate([[0.0], np.cumsum(_gl_segment(low, a, b))])
    upper = np.concatenate([np.cumsum(_gl_segment(high, a, b)[::-1])[::-1], [0.0]])
    upper += _gpd_brier(mu, tau, mu * math.expm1(top / tau), kind) - _gpd_lower(mu, tau, top, kind)
    idx = np.searchsorted(knots, sy)
    return lower[idx] + upper[idx]


def _gpd_lower(mu, tau, s_top, kind):
    # the part of _gpd_brier below s_top, so that the difference is the tail above it
    scale = mu / tau

    def low(s):
        f = -math.expm1(-s)
        return f * f * _weight_scalar(kind, mu * math.expm1(s / tau)) * scale * math.exp(s / tau)

    return integrate.quad(low, 0.0, s_top, epsabs=1e-13, epsrel=1e-12, limit=400)[0] if s_top > 0 else 0.0


def _scipy_brier(dist, y, kind):
    ufun = functools.partial(weight, kind)
    left, _ = integrate.quad(lambda z: dist.cdf(z) ** 2 * float(ufun(z)), -np.inf, y,
                             epsabs=1e-12, epsrel=1e-11, limit=200)
    right, _ = integrate.quad(lambda z: dist.sf(z) ** 2 * float(ufun(z)), y, np.inf,
                              epsabs=1e-12, epsrel=1e-11, limit=200)
    return left + right


def _gpd_crps_closed(mu, tau, y):
    # E|X - y| - E|X - X'| / 2 for the Lomax law, tau > 1
    theta = mu / (tau - 1.0)  # the mean; stays moderate near the exponential limit
    e_abs = y - theta + 2.0 * theta * np.exp((1.0 - tau) * np.log1p(y / mu))
    return e_abs - theta * (tau / (2.0 * tau - 1.0))


def crps(forecast, y, return_form=False):
    """Continuous ranked probability score (lower is better).

    ``forecast`` is a :class:`GpdParams` (vectorized over ``y``), a
    :class:`PointMass`, or a frozen ``scipy.stats`` distribution. GPD forecasts
    with ``tau > 1`` use the closed energy form; the rest use the Brier
    integral. ``tau <= 1/2`` gives ``inf`` since the integral diverges.

    With ``return_form=True`` a second array names the form used per element.
    """
    y_arr = np.asarray(y, dtype=float)
    if isinstance(forecast, PointMass):
        out = np.abs(forecast.at - y_arr)
        forms = np.full(out.shape, "point")
    elif isinstance(forecast, GpdParams):
        mu, tau, yb = np.broadcast_arrays(np.asarray(forecast.mu, float), np.asarray(forecast.tau, float), y_arr)
        out = np.empty(yb.shape)
        forms = np.empty(yb.shape, dtype=object)
        closed = tau > 1.0
        out[closed] = _gpd_crps_closed(mu[closed], tau[closed], yb[closed])
        forms[closed] = "energy"
        rest = ~closed
        if np.ndim(forecast.mu) == np.ndim(forecast.tau) == 0 and rest.sum() >= _SORTED_MIN \
                and np.all(yb[rest] >= 0):
            out[rest] = _gpd_brier_sorted(forecast.mu, forecast.tau, yb[rest], WeightKind.EQUAL)
            forms[rest] = "integral"
        for idx in np.ndindex(yb.shape):
            if closed[idx] or forms[idx] is not None:
                continue
            out[idx] = _gpd_brier(mu[idx], tau[idx], yb[idx], WeightKind.EQUAL)
            forms[idx] = "integral"
    else:
        out = np.vectorize(lambda v: _scipy_brier(forecast, v, WeightKind.EQUAL))(y_arr).astype(float)
        forms = np.full(out.shape, "integral")
    if out.ndim == 0:
        out, forms = float(out), str(forms)
    return (out, forms) if return_form else out


def tw_crps(forecast, y, w=WeightKind.EQUAL):
    """Threshold-weighted CRPS, always evaluated as the weighted Brier integral."""
    kind = WeightKind(w)
    y_arr = np.asarray(y, dtype=float)
    if isinstance(forecast, PointMass):
        out = np.zeros(y_arr.shape) + np.abs(chain(kind, forecast.at) - chain(kind, y_arr))
    elif isinstance(forecast, GpdParams) and np.ndim(forecast.mu) == np.ndim(forecast.tau) == 0 \
            and y_arr.size >= _SORTED_MIN and np.all(y_arr >= 0):
        out = _gpd_brier_sorted(forecast.mu, forecast.tau, y_arr, kind)
    elif isinstance(forecast, GpdParams):
        mu, tau, yb = np.broadcast_arrays(np.asarray(forecast.mu, float), np.asarray(forecast.tau, float), y_arr)
        out = np.empty(yb.shape)
        for idx in np.ndindex(yb.shape):
            out[idx] = _gpd_brier(mu[idx], tau[idx], yb[idx], kind)
    else:
        out = np.vectorize(lambda v: _scipy_brier(forecast, v, kind))(y_arr).astype(float)
    return float(out) if np.ndim(out) == 0 else out


def _check_moments(params, beta, kind):
    if not _linear_growth(kind):
        return
    tau = np.broadcast_to(np.asarray(params.tau, float), np.shape(params.tau))
    bad = np.nonzero(np.atleast_1d(tau) <= beta)[0]
    if bad.size:
        i = int(bad[0])
        raise MomentConditionError(
            f"beta={beta} requires E|X|^beta < inf but forecast #{i} has tau={np.atleast_1d(tau)[i]:.4g}")


def _gpd_es_quad(mu, tau, y, beta, kind):
    params = GpdParams(mu, tau)
    vy = float(chain(kind, y))
    py = float(gpd_cdf(y, params))

    def first(p):
        return abs(float(chain(kind, gpd_quantile(p, params))) - vy) ** beta

    pts = [py] if 0 < py < 1 else None
    a, _ = integrate.quad(first, 0.0, 1.0, points=pts, limit=400, epsabs=1e-10, epsrel=1e-9)
    b = _gpd_es_spread(mu, tau, beta, kind)
    return a - 0.5 * b


@functools.lru_cache(maxsize=4096)
def _gpd_es_spread(mu, tau, beta, kind):
    """E|v(X) - v(X')|^beta by nested quadrature on the PIT scale."""
    params = GpdParams(mu, tau)

    def inner(p):
        vp = float(chain(kind, gpd_quantile(p, params)))
        val, _ = integrate.quad(
            lambda s: abs(float(chain(kind, gpd_quantile(s, params))) - vp) ** beta,
            0.0, 1.0, points=[p], limit=200, epsabs=1e-9, epsrel=1e-8)
        return val

    val, _ = integrate.quad(inner, 0.0, 1.0, limit=200, epsabs=1e-8, epsrel=1e-7)
    return val


def _crn_uniforms(n_mc, seed):
    rng = np.random.default_rng(seed)
    # stratified uniforms; two independent permutations give the X / X' pairs
    u1 = (np.arange(n_mc) + rng.random(n_mc)) / n_mc
    u2 = (np.arange(n_mc) + rng.random(n_mc)) / n_mc
    return u1, rng.permutation(u2)


def energy_score(forecast, y, beta, w=WeightKind.EQUAL, method="quad", n_mc=20_000, seed=0,
                 return_se=False):
    """Energy score ``E|v(X)-v(y)|^beta - E|v(X)-v(X')|^beta / 2``.

    ``method="quad"`` integrates on the PIT scale. ``method="mc"`` uses common
    random numbers drawn from ``seed``, so two forecasts scored with the same
    seed share their uniforms; ``return_se`` then also returns the Monte-Carlo
    standard error per element.

    Raises
    ------
    MomentConditionError
        If ``beta >= tau`` for any forecast and the weight grows linearly
        (``EQUAL`` or ``RIGHT``).
    """
    if not 0 < beta < 2:
        raise ValueError("beta must lie in (0, 2)")
    kind = WeightKind(w)
    y_arr = np.asarray(y, dtype=float)
    if isinstance(forecast, PointMass):
        out = np.abs(chain(kind, forecast.at) - chain(kind, y_arr)) ** beta
        return (out, np.zeros_like(out)) if return_se else out
    _check_moments(forecast, beta, kind)
    mu, tau, yb = np.broadcast_arrays(np.asarray(forecast.mu, float), np.asarray(forecast.tau, float), y_arr)
    if method == "quad":
        out = np.empty(yb.shape)
        for idx in np.ndindex(yb.shape):
            out[idx] = _gpd_es_quad(float(mu[idx]), float(tau[idx]), float(yb[idx]), beta, kind)
        out = float(out) if out.ndim == 0 else out
        return (out, 0.0 * np.asarray(out)) if return_se else out
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")
    u1, u2 = _crn_uniforms(n_mc, seed)
    flat_mu, flat_tau, flat_y = (a.reshape(-1, 1) for a in (mu, tau, yb))
    x1 = flat_mu * np.expm1(-np.log1p(-u1)[None, :] / flat_tau)
    x2 = flat_mu * np.expm1(-np.log1p(-u2)[None, :] / flat_tau)
    v1, v2, vy = chain(kind, x1), chain(kind, x2), chain(kind, flat_y)
    terms = np.abs(v1 - vy) ** beta - 0.5 * np.abs(v1 - v2) ** beta
    out = terms.mean(axis=1).reshape(yb.shape)
    se = (terms.std(axis=1, ddof=1) / np.sqrt(n_mc)).reshape(yb.shape)
    if out.ndim == 0:
        out, se = float(out), float(se)
    return (out, se) if return_se else out


# --------------------------------------------------------------------------
# residual scores
# --------------------------------------------------------------------------

def pit_clip(p):
    return np.clip(np.asarray(p, dtype=float), PIT_EPS, 1.0 - PIT_EPS)


def residual(p, ref=RefDist.NORMAL):
    """Map forecast PIT values to the residual scale of ``ref``."""
    return RefDist(ref).dist.ppf(pit_clip(p))


# grid in s with z = exp(s) for the lognormal reference, z = s otherwise
_S_LO, _S_HI, _S_H = -9.0, 9.0, 0.05
_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


def _s_to_z(ref, s):
    return np.exp(s) if ref is RefDist.LOGNORMAL else s


def _z_to_s(ref, z):
    return np.log(z) if ref is RefDist.LOGNORMAL else z


def _dz_ds(ref, s):
    return np.exp(s) if ref is RefDist.LOGNORMAL else np.ones_like(s)


def _gl_segment(f, a, b):
    """Gauss-Legendre integral of vectorized ``f`` over [a, b] (arrays)."""
    a = np.asarray(a, float)[..., None]
    b = np.asarray(b, float)[..., None]
    half = 0.5 * (b - a)
    s = 0.5 * (a + b) + half * _GL_X
    return (half * _GL_W * f(s)).sum(axis=-1)


@functools.lru_cache(maxsize=None)
def _brier_tables(ref, kind):
    """Cumulative tables of int F^2 u dz (from below) and int (1-F)^2 u dz (from above)."""
    dist = ref.dist
    nodes = np.arange(_S_LO, _S_HI + 0.5 * _S_H, _S_H)

    def low_integrand(s):
        z = _s_to_z(ref, s)
        return dist.cdf(z) ** 2 * weight(kind, z) * _dz_ds(ref, s)

    def high_integrand(s):
        z = _s_to_z(ref, s)
        return dist.sf(z) ** 2 * weight(kind, z) * _dz_ds(ref, s)

    seg_low = _gl_segment(low_integrand, nodes[:-1], nodes[1:])
    seg_high = _gl_segment(high_integrand, nodes[:-1], nodes[1:])
    cum_low = np.concatenate([[0.0], np.cumsum(seg_low)])
    cum_high = np.concatenate([np.cumsum(seg_high[::-1])[::-1], [0.0]])
    return nodes, cum_low, cum_high, low_integrand, high_integrand


def _residual_brier(r, ref, kind):
    nodes, cum_low, cum_high, f_low, f_high = _brier_tables(ref, kind)
    s = _z_to_s(ref, r)
    sc = np.clip(s, nodes[0], nodes[-1])
    k = np.clip(np.searchsorted(nodes, sc, side="right") - 1, 0, len(nodes) - 2)
    a = cum_low[k] + _gl_segment(f_low, nodes[k], sc)
    b = cum_high[k + 1] + _gl_segment(f_high, sc, nodes[k + 1])
    # outside the grid F is 0 or 1 to double precision, so the integrand is u alone
    zlo, zhi = _s_to_z(ref, nodes[0]), _s_to_z(ref, nodes[-1])
    below = s < nodes[0]
    above = s > nodes[-1]
    b = np.where(below, b + chain(kind, zlo) - chain(kind, np.where(below, r, zlo)), b)
    a = np.where(above, a + chain(kind, np.where(above, r, zhi)) - chain(kind, zhi), a)
    return a + b


def r_crps(p, w=WeightKind.EQUAL, ref=RefDist.NORMAL):
    """Residual CRPS of forecast PIT values ``p = F(y)``.

    The standard-normal, equal-weight case uses the closed form
    ``2 phi(r) + r (2 Phi(r) - 1) - 1/sqrt(pi)``; other cases integrate the
    weighted Brier score on the residual scale.
    """
    kind, ref = WeightKind(w), RefDist(ref)
    r = residual(p, ref)
    if kind is WeightKind.EQUAL and ref is RefDist.NORMAL:
        out = 2.0 * stats.norm.pdf(r) + r * (2.0 * stats.norm.cdf(r) - 1.0) - 1.0 / np.sqrt(np.pi)
    else:
        out = _residual_brier(r, ref, kind)
    return float(out) if np.ndim(out) == 0 else out


# Gauss-Jacobi rule absorbing the |z - r|^beta end-point singularity
_GJ_N = 160
_GJ_SPAN = 18.0


@functools.lru_cache(maxsize=64)
def _jacobi(beta):
    x, wts = special.roots_jacobi(_GJ_N, 0.0, beta)
    return x, wts


def _kernel_moment(r, beta, ref, kind):
    """E|v(R) - v(r)|^beta for each r, R ~ ref, integrated on the s scale.

    On each side of ``s_r`` the integrand is ``|s - s_r|^beta`` times a smooth
    factor, which a Gauss-Jacobi rule integrates accurately.
    """
    dist = ref.dist
    s_r = np.atleast_1d(_z_to_s(ref, np.asarray(r, float)))
    vr = chain(kind, _s_to_z(ref, s_r))[:, None]
    x, wts = _jacobi(beta)
    total = np.zeros(s_r.shape)
    for sign in (1.0, -1.0):
        # map x in [-1, 1] to t = (x + 1) / 2 * span, the distance from s_r
        t = 0.5 * (x + 1.0) * _GJ_SPAN
        s = s_r[:, None] + sign * t[None, :]
        z = _s_to_z(ref, s)
        dens = dist.pdf(z) * _dz_ds(ref, s)
        vz = chain(kind, z)
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.abs(vz - vr) / t[None, :]
        smooth = np.where(np.isfinite(ratio), ratio, 0.0) ** beta * dens
        # weight (1 + x)^beta = (2 t / span)^beta; dt = span/2 dx
        scale = (0.5 * _GJ_SPAN) ** (beta + 1.0)
        total += scale * (smooth * wts[None, :]).sum(axis=1)
    return total


@functools.lru_cache(maxsize=256)
def _kernel_spread(beta, ref, kind):
    """E|v(R) - v(R')|^beta by Gauss-Legendre over the s scale."""
    x, wts = np.polynomial.legendre.leggauss(400)
    s = 0.5 * (_S_LO + _S_HI) + 0.5 * (_S_HI - _S_LO) * x
    z = _s_to_z(ref, s)
    dens = ref.dist.pdf(z) * _dz_ds(ref, s)
    inner = _kernel_moment(z, beta, ref, kind)
    return float(0.5 * (_S_HI - _S_LO) * np.sum(wts * dens * inner))


def r_es(p, beta, w=WeightKind.EQUAL, ref=RefDist.NORMAL):
    """Residual energy score of forecast PIT values ``p = F(y)``.

    ``E|v(R) - v(r)|^beta - E|v(R) - v(R')|^beta / 2`` with ``r`` the residual
    of ``p`` under ``ref``. Finite for any ``beta`` in (0, 2).
    """
    if not 0 < beta < 2:
        raise ValueError("beta must lie in (0, 2)")
    kind, ref = WeightKind(w), RefDist(ref)
    r = residual(p, ref)
    out = _kernel_moment(np.ravel(r), beta, ref, kind).reshape(np.shape(r))
    out = out - 0.5 * _kernel_spread(float(beta), ref, kind)
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# score series
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ScoreSeries:
    """Per-observation scores for one (scheme, kind, weight) triple."""

    scheme_name: str
    kind: ScoreKind
    weight: WeightKind
    event_ids: tuple
    values: np.ndarray = field(repr=False)
    beta: float | None = None
    ref: RefDist | None = None
    orientation: str = "lower-is-better"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or len(vals) != len(self.event_ids):
            raise ValueError("values must be one score per event id")
        if not np.all(np.isfinite(vals)):
            raise ValueError("score values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "kind", ScoreKind(self.kind))
        object.__setattr__(self, "weight", WeightKind(self.weight))
        object.__setattr__(self, "event_ids", tuple(self.event_ids))
        if self.ref is not None:
            object.__setattr__(self, "ref", RefDist(self.ref))

    def __len__(self):
        return len(self.values)

    def mean(self):
        return float(np.mean(self.values))

    def metadata(self):
        return {
            "scheme": self.scheme_name,
            "kind": self.kind.value,
            "weight": self.weight.value,
            "beta": self.beta,
            "ref": None if self.ref is None else self.ref.value,
            "orientation": self.orientation,
        }

    def subset(self, mask):
        mask = np.asarray(mask, dtype=bool)
        ids = tuple(i for i, keep in zip(self.event_ids, mask) if keep)
        return ScoreSeries(self.scheme_name, self.kind, self.weight, ids, self.values[mask],
                           self.beta, self.ref, self.orientation)

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("event_id,score\n")
            for eid, val in zip(self.event_ids, self.values):
                fh.write(f"{eid},{float(val)!r}\n")
        with open(str(path) + ".json", "w", encoding="utf-8") as fh:
            json.dump(self.metadata(), fh, sort_keys=True, indent=2)

    @classmethod
    def from_csv(cls, path):
        with open(str(path) + ".json", encoding="utf-8") as fh:
            meta = json.load(fh)
        ids, vals = [], []
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip()
            if header != "event_id,score":
                raise ValueError(f"{path}: expected header 'event_id,score'")
            for line in fh:
                eid, val = line.rstrip("\n").split(",")
                ids.append(eid)
                vals.append(float(val))
        return cls(meta["scheme"], meta["kind"], meta["weight"], ids, np.array(vals),
                   meta.get("beta"), meta.get("ref"), meta.get("orientation", "lower-is-better"))
