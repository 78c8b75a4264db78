"""Location-scale-shape families generated by a base density.

A member with parameters ``(mu, sigma, xi)`` is the law of
``mu + sigma * (exp(xi * Z) - 1) / xi`` where ``Z`` follows the base
density; ``xi = 0`` is the location-scale limit ``mu + sigma * Z``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _mgf
from .base_density import BaseDensity, SupportInterval, exponential, gumbel
from .errors import DomainError, ValidationError
from .numerics import DEFAULT_QUAD, Estimate, QuadratureSpec, integrate

__all__ = ["ThetaParams", "LssModel", "gev", "gpd", "log1p_ratio", "expm1_ratio"]

_TINY_T = 1e-300


@dataclass(frozen=True)
class ThetaParams:
    mu: float
    sigma: float
    xi: float

    def __post_init__(self):
        for name in ("mu", "sigma", "xi"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValidationError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if not self.sigma > 0:
            raise ValidationError(f"sigma must be positive, got {self.sigma!r}")

    def __iter__(self):
        return iter((self.mu, self.sigma, self.xi))

    def as_array(self) -> np.ndarray:
        return np.array([self.mu, self.sigma, self.xi])

    def replace(self, **kw) -> "ThetaParams":
        values = dict(mu=self.mu, sigma=self.sigma, xi=self.xi)
        values.update(kw)
        return ThetaParams(**values)


def log1p_ratio(w):
    """``log1p(w) / w`` with the value 1 at ``w = 0``."""
    w = np.asarray(w, dtype=float)
    with np.errstate(all="ignore"):
        out = np.where(w == 0, 1.0, np.log1p(w) / np.where(w == 0, 1.0, w))
    return out


def expm1_ratio(y):
    """``expm1(y) / y`` with the value 1 at ``y = 0``."""
    y = np.asarray(y, dtype=float)
    with np.errstate(all="ignore"):
        out = np.where(y == 0, 1.0, np.expm1(y) / np.where(y == 0, 1.0, y))
    return out


def _as_theta(theta) -> ThetaParams:
    if isinstance(theta, ThetaParams):
        return theta
    return ThetaParams(*theta)


def _shaped(value, like):
    if np.ndim(like) == 0:
        return float(np.asarray(value).reshape(-1)[0])
    return value


class LssModel:
    """The family generated by ``base`` with shapes restricted to ``shape_interval``.

    The shape interval must be open, contain zero, and satisfy
    ``2 * shape_interval`` inside the MGF domain of the base, which is what
    the variance and the information matrix need.
    """

    def __init__(self, base: BaseDensity, shape_interval=(-0.45, 0.45), name: str | None = None):
        lo, hi = (float(v) for v in shape_interval)
        if not lo < 0.0 < hi:
            raise ValidationError("shape interval must be open and contain 0")
        dlo, dhi = base.mgf_domain
        if 2 * lo < dlo or 2 * hi > dhi:
            raise ValidationError(
                f"shape interval {shape_interval} needs the MGF on {(2 * lo, 2 * hi)}, "
                f"outside {base.mgf_domain}"
            )
        self.base = base
        self.shape_interval = (lo, hi)
        self.name = name or base.name

    def __repr__(self):
        return f"LssModel({self.name}, shape_interval={self.shape_interval})"

    # -- parameters ----------------------------------------------------
    def theta(self, mu, sigma, xi) -> ThetaParams:
        return self.require_interval(ThetaParams(mu, sigma, xi))

    def check(self, theta) -> ThetaParams:
        """Coerce to :class:`ThetaParams`.

        Distribution functions are defined for every finite shape, so no
        interval check happens here; see :meth:`require_interval`.
        """
        return _as_theta(theta)

    def require_interval(self, theta) -> ThetaParams:
        theta = _as_theta(theta)
        lo, hi = self.shape_interval
        if not lo < theta.xi < hi:
            raise DomainError(f"shape {theta.xi!r} outside the shape interval {self.shape_interval}")
        return theta

    def check_shape(self, xi: float, factor: float = 2.0) -> float:
        if not self.base.in_mgf_domain(factor * xi):
            raise DomainError(
                f"MGF of {self.base.name} undefined at {factor}*xi = {factor * xi!r}"
            )
        return float(xi)

    # -- transforms ----------------------------------------------------
    def transform(self, theta, z):
        """Map base variates ``z`` to the member ``theta``."""
        mu, sigma, xi = _as_theta(theta)
        z = np.asarray(z, dtype=float)
        with np.errstate(all="ignore"):
            out = mu + sigma * z * expm1_ratio(xi * z)
        # z = +-inf only arise at the ends of the unit interval
        lower_end = mu - sigma / xi if xi > 0 else -np.inf
        upper_end = mu - sigma / xi if xi < 0 else np.inf
        # rounding must not push finite ends outside the support
        out = np.clip(out, lower_end, upper_end)
        out = np.where(z == -np.inf, lower_end, out)
        return np.where(z == np.inf, upper_end, out)

    def standardize(self, theta, x):
        """Return ``(t, z)`` with ``t = 1 + xi (x - mu) / sigma`` and ``z`` its base variate.

        ``z`` is NaN where ``t <= 0``.
        """
        mu, sigma, xi = _as_theta(theta)
        a = (np.asarray(x, dtype=float) - mu) / sigma
        w = xi * a
        t = 1.0 + w
        with np.errstate(all="ignore"):
            z = np.where(t > 0, a * log1p_ratio(np.where(t > 0, w, 0.0)), np.nan)
        return t, z

    # -- distribution functions ----------------------------------------
    def density(self, theta, x):
        theta = self.check(theta)
        x_in = np.asarray(x, dtype=float)
        xf = np.atleast_1d(x_in).astype(float)
        mu, sigma, xi = theta
        t, z = self.standardize(theta, xf)
        out = np.zeros_like(xf)
        base = self.base
        ok = (t > 0) & np.isfinite(z) & base.support.contains(z)
        with np.errstate(all="ignore"):
            out[ok] = base.pdf(z[ok]) / (sigma * t[ok])
        edge = (t == 0) & (xi != 0)
        if edge.any():
            out[edge] = self._endpoint_density(theta)
        return _shaped(out, x_in)

    def _endpoint_density(self, theta):
        # limit of f(z) / (sigma t) as t -> 0+
        mu, sigma, xi = theta
        z = math.log(_TINY_T) / xi
        with np.errstate(all="ignore"):
            value = float(self.base.pdf(z)) / (sigma * _TINY_T)
        if not self.base.support.contains(z):
            return 0.0
        return math.inf if value > 1e50 else value

    def cdf(self, theta, x):
        theta = self.check(theta)
        x_in = np.asarray(x, dtype=float)
        t, z = self.standardize(theta, np.atleast_1d(x_in))
        below = 0.0 if theta.xi > 0 else 1.0
        with np.errstate(all="ignore"):
            out = np.where(t > 0, self.base.cdf(np.nan_to_num(z)), below)
        return _shaped(np.clip(out, 0.0, 1.0), x_in)

    def sf(self, theta, x):
        theta = self.check(theta)
        x_in = np.asarray(x, dtype=float)
        t, z = self.standardize(theta, np.atleast_1d(x_in))
        below = 1.0 if theta.xi > 0 else 0.0
        with np.errstate(all="ignore"):
            out = np.where(t > 0, self.base.sf(np.nan_to_num(z)), below)
        return _shaped(np.clip(out, 0.0, 1.0), x_in)

    def quantile(self, theta, u):
        theta = self.check(theta)
        u_in = np.asarray(u, dtype=float)
        if not np.all((u_in > 0) & (u_in < 1)):
            raise DomainError("quantile levels must lie in the open interval (0, 1)")
        return _shaped(self.transform(theta, self.base.quantile(u_in)), u_in)

    def quantile_upper(self, theta, v):
        """``quantile(1 - v)`` evaluated without forming ``1 - v``."""
        theta = self.check(theta)
        v_in = np.asarray(v, dtype=float)
        if not np.all((v_in > 0) & (v_in < 1)):
            raise DomainError("upper-tail levels must lie in the open interval (0, 1)")
        return _shaped(self.transform(theta, self.base.isf(v_in)), v_in)

    def support(self, theta) -> SupportInterval:
        theta = self.check(theta)
        mu, sigma, xi = theta
        bs = self.base.support

        def image(z, closed):
            if math.isfinite(z):
                return float(self.transform(theta, z)), closed
            value = float(self.transform(theta, z))
            # a finite limit of an infinite base end is attained as a closed end
            return (value, True) if math.isfinite(value) else (value, False)

        lo, lo_closed = image(bs.lo, bs.lo_closed)
        hi, hi_closed = image(bs.hi, bs.hi_closed)
        return SupportInterval(lo, hi, lo_closed, hi_closed)

    def sample(self, theta, n: int, seed: int) -> np.ndarray:
        theta = self.check(theta)
        if n < 1:
            raise ValidationError("sample size must be at least 1")
        rng = np.random.Generator(np.random.Philox(seed))
        u = rng.random(n)
        u = np.where(u == 0.0, 2.0**-53, u)
        lower = u < 0.5
        z = np.empty(n)
        z[lower] = self.base.quantile(u[lower])
        z[~lower] = self.base.isf(1.0 - u[~lower])
        return self.transform(theta, z)

    # -- moments --------------------------------------------------------
    def mean_var(self, theta) -> tuple[float, float]:
        theta = self.check(theta)
        mu, sigma, xi = theta
        self.check_shape(xi)
        m = _mgf.MEAN(self.base, xi)
        second = _mgf.SECOND(self.base, xi)
        return mu + sigma * m, sigma**2 * (second - m * m)

    def moment_T(self, theta, r: float, k: int) -> float:
        """``E[T**r * log(T)**k]`` for ``T = 1 + xi (X - mu) / sigma``."""
        theta = self.check(theta)
        if theta.xi == 0:
            raise DomainError("the T-moment identity needs a nonzero shape")
        if r < 0 or k not in (0, 1, 2, 3, 4):
            raise ValidationError("need r >= 0 and k in 0..4")
        if not self.base.in_mgf_domain(r * theta.xi):
            raise DomainError(f"MGF undefined at r*xi = {r * theta.xi!r}")
        return theta.xi**k * self.base.mgf_deriv(k, r * theta.xi)

    # -- expectations ----------------------------------------------------
    def quantile_integral(
        self,
        theta,
        fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
        spec: QuadratureSpec = DEFAULT_QUAD,
    ) -> Estimate:
        """Integrate ``fn(x, side_level)`` over the unit interval of levels.

        The interval is split at 1/2.  On the lower half ``x = Q(u)`` and on
        the upper half ``x = Q(1 - v)``; ``fn`` receives ``(x, u)`` and
        ``(x, v)`` respectively, each level measured from its own end so that
        endpoint singularities sit at zero.  ``fn`` must accept the extra
        keyword ``upper`` telling which half is being integrated.
        """
        theta = self.check(theta)

        def lower(u):
            return fn(self.quantile(theta, u), u, upper=False)

        def upper(v):
            return fn(self.quantile_upper(theta, v), v, upper=True)

        a = integrate(lower, 0.0, 0.5, spec)
        b = integrate(upper, 0.0, 0.5, spec)
        return Estimate(a.value + b.value, a.error + b.error)

    def expect(self, theta, g: Callable[[np.ndarray], np.ndarray], spec=DEFAULT_QUAD) -> Estimate:
        """``E[g(X)]`` by quadrature in the quantile domain."""
        return self.quantile_integral(theta, lambda x, level, upper: g(x), spec)


def gev(shape_interval=(-0.45, 0.45)) -> LssModel:
    """Generalised extreme value family."""
    return LssModel(gumbel(), shape_interval, name="gev")


def gpd(shape_interval=(-0.45, 0.45)) -> LssModel:
    """Generalised Pareto family."""
    return LssModel(exponential(), shape_interval, name="gpd")
