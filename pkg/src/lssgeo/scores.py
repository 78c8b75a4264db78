"""Wasserstein score functions and their derivatives in x.

The score for parameter ``i`` solves ``d/dx (p * dPhi/dx) = -dp/dtheta_i``
with zero mean under ``p``.  Closed forms are used here; ``score_numeric``
integrates the equation directly and serves as an independent check.
"""

from __future__ import annotations

import math
from typing import Literal

import numpy as np
from scipy import special

from . import _mgf
from .errors import DomainError, NonConvergence, ValidationError
from .model import LssModel, ThetaParams
from .numerics import DEFAULT_QUAD, DiffSpec, QuadratureSpec, derivative

__all__ = [
    "INDICES",
    "score",
    "score_dx",
    "score_numeric",
    "continuity_residual",
]

ScoreIndex = Literal["mu", "sigma", "xi"]
INDICES: tuple[str, ...] = ("mu", "sigma", "xi")

_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


def _index(which) -> int:
    if isinstance(which, (int, np.integer)) and 0 <= which < 3:
        return int(which)
    try:
        return INDICES.index(which)
    except ValueError:
        raise ValidationError(f"unknown score index {which!r}") from None


# ---------------------------------------------------------------------------
# scalar kernels

_K2_SERIES = np.array([(-1.0) ** n / (n * (n - 1)) for n in range(2, 32)])
_K3_SERIES = np.array([(-1.0) ** (n + 1) / (n * (n - 1) * (n - 2)) for n in range(3, 30)])


def _split(a, xi):
    w = xi * a
    small = np.abs(w) < 0.1
    xs = xi if xi != 0 else 1.0
    # x is already inside the support, so t < 0 is rounding at a closed end
    t = np.where(small, 1.0, np.maximum(1.0 + w, 0.0))
    return w, small, xs, t


def _k2(a, xi):
    # ((1+w) log(1+w) - w) / xi^2 with w = xi a; a^2/2 at xi = 0
    w, small, xs, t = _split(a, xi)
    with np.errstate(all="ignore"):
        direct = (special.xlogy(t, t) - (t - 1.0)) / xs**2
    series = a * a * np.polynomial.polynomial.polyval(np.where(small, w, 0.0), _K2_SERIES)
    return np.where(small, series, direct)


def _k3(a, xi):
    # (t^2 log t / 2 - 3t^2/4 + t - 1/4) / xi^3 with t = 1 + xi a; a^3/6 at xi = 0
    w, small, xs, t = _split(a, xi)
    with np.errstate(all="ignore"):
        direct = (0.5 * special.xlogy(t * t, t) - 0.75 * t * t + t - 0.25) / xs**3
    series = a**3 * np.polynomial.polynomial.polyval(np.where(small, w, 0.0), _K3_SERIES)
    return np.where(small, series, direct)


def _standardized(model: LssModel, theta: ThetaParams, x):
    x = np.asarray(x, dtype=float)
    support = model.support(theta)
    inside = np.atleast_1d(support.contains(x))
    if not np.all(inside):
        bad = np.atleast_1d(x)[~inside][0]
        raise DomainError(f"x = {bad!r} outside the support {support}")
    return (x - theta.mu) / theta.sigma


def _out(value, like):
    return float(value) if np.ndim(like) == 0 else value


# ---------------------------------------------------------------------------


def score(model: LssModel, theta, which: ScoreIndex, x):
    """Closed-form Wasserstein score ``Phi_i(x; theta)``."""
    theta = model.check(theta)
    i = _index(which)
    a = _standardized(model, theta, x)
    mu, sigma, xi = theta
    model.check_shape(xi)
    base = model.base
    if i == 0:
        mean, _ = model.mean_var(theta)
        value = np.asarray(x, dtype=float) - mean
    elif i == 1:
        mean, var = model.mean_var(theta)
        value = sigma * (a * a - (var + (mean - mu) ** 2) / sigma**2) / 2.0
    else:
        value = sigma**2 * (_k3(a, xi) - _mgf.SCORE_CONST(base, xi))
    return _out(value, x)


def score_dx(model: LssModel, theta, which: ScoreIndex, x):
    """``d/dx`` of the score; it does not depend on the base density."""
    theta = model.check(theta)
    i = _index(which)
    a = _standardized(model, theta, x)
    sigma, xi = theta.sigma, theta.xi
    if i == 0:
        value = np.ones_like(a)
    elif i == 1:
        value = a
    else:
        value = sigma * _k2(a, xi)
    return _out(value, x)


# ---------------------------------------------------------------------------
# independent oracle


def _fd_theta(fn, theta: ThetaParams, i: int):
    """Richardson-corrected central difference in parameter ``i``."""
    values = theta.as_array()
    h = 1e-5 * max(1.0, abs(values[i]))

    def at(step):
        plus, minus = values.copy(), values.copy()
        plus[i] += step
        minus[i] -= step
        return (fn(ThetaParams(*plus)) - fn(ThetaParams(*minus))) / (2 * step)

    d1, d2 = at(h), at(h / 2)
    return d2 + (d2 - d1) / 3.0


def _dphi_numeric(model, theta, i, x):
    # p Phi' = -dP/dtheta below the median and +dS/dtheta above it
    x = np.asarray(x, dtype=float)
    med = model.quantile(theta, 0.5)
    lower = x <= med
    out = np.empty_like(x)
    p = model.density(theta, x)
    if lower.any():
        dp = _fd_theta(lambda th: model.cdf(th, x[lower]), theta, i)
        out[lower] = -dp / p[lower]
    if (~lower).any():
        ds = _fd_theta(lambda th: model.sf(th, x[~lower]), theta, i)
        out[~lower] = ds / p[~lower]
    return out, p


def score_numeric(model: LssModel, theta, which: ScoreIndex, grid, spec: QuadratureSpec = DEFAULT_QUAD):
    """Score on ``grid`` obtained by integrating the continuity equation.

    ``Phi'`` comes from finite differences of the distribution function in
    the parameter, ``Phi`` from Gauss-Legendre quadrature of ``Phi'``
    between consecutive points anchored at the median, and the additive
    constant from the zero-mean condition written in the quantile domain.
    """
    theta = model.check(theta)
    i = _index(which)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1 or np.any(np.diff(grid) <= 0):
        raise ValidationError("grid must be a strictly increasing 1-d sequence")
    _standardized(model, theta, grid)
    med = float(model.quantile(theta, 0.5))

    def dphi(x):
        return _dphi_numeric(model, theta, i, x)[0]

    # Phi(x) - Phi(median) by piecewise quadrature through sorted knots
    knots = np.union1d(grid, [med])
    pieces = np.empty(knots.size - 1)
    a, b = knots[:-1, None], knots[1:, None]
    nodes = 0.5 * (b - a) * _GL_X + 0.5 * (b + a)
    vals = dphi(nodes.ravel()).reshape(nodes.shape)
    pieces = (0.5 * (b - a) * vals * _GL_W).sum(axis=1)
    cum = np.concatenate([[0.0], np.cumsum(pieces)])
    k = int(np.searchsorted(knots, med))
    rel = cum - cum[k]

    # E[Phi] - Phi(median) = int_med^sup Phi' S - int_inf^med Phi' P
    def integrand(x, level, upper):
        d, p = _dphi_numeric(model, theta, i, x)
        with np.errstate(all="ignore"):
            v = d * level / p
        v = np.where((p > 0) & np.isfinite(v), v, 0.0)
        return v if upper else -v

    try:
        shift = model.quantile_integral(theta, integrand, spec).value
    except NonConvergence as exc:
        raise NonConvergence(f"finite-difference noise spoiled the mean condition: {exc}") from exc
    phi = rel - shift
    return phi[np.searchsorted(knots, grid)]


def continuity_residual(model: LssModel, theta, which: ScoreIndex, x: float):
    """Both sides of ``d/dx (p Phi') = -dp/dtheta_i`` at ``x`` by central differences.

    Returns ``(lhs, rhs)``.
    """
    theta = model.check(theta)
    i = _index(which)
    x = float(x)

    def flux(y):
        return float(model.density(theta, y)) * float(score_dx(model, theta, i, y))

    values = theta.as_array()

    def dens_at(v):
        p = values.copy()
        p[i] = v
        return float(model.density(ThetaParams(*p), x))

    step = min(0.01, 0.01 * theta.sigma / max(1.0, abs(x)))
    lhs = derivative(flux, x, 1, DiffSpec(step, 4)).value
    rhs = -derivative(dens_at, values[i], 1, DiffSpec(0.01, 4)).value
    return lhs, rhs
