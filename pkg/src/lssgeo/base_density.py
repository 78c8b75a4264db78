"""Generator densities: pdf, cdf, quantile and moment generating function."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize, special

from .errors import DomainError, ValidationError
from .numerics import QuadratureSpec, integrate

__all__ = [
    "SupportInterval",
    "BaseDensity",
    "gumbel",
    "exponential",
    "custom",
]


@dataclass(frozen=True)
class SupportInterval:
    lo: float
    hi: float
    lo_closed: bool = False
    hi_closed: bool = False

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValidationError(f"support lower end {self.lo} exceeds upper end {self.hi}")

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        above = x >= self.lo if self.lo_closed else x > self.lo
        below = x <= self.hi if self.hi_closed else x < self.hi
        return above & below

    def interior(self, x):
        x = np.asarray(x, dtype=float)
        return (x > self.lo) & (x < self.hi)

    def __str__(self):
        left = "[" if self.lo_closed else "("
        right = "]" if self.hi_closed else ")"
        return f"{left}{self.lo:.17g}, {self.hi:.17g}{right}"


def _scalarize(value, like):
    if np.ndim(like) == 0:
        return float(value)
    return value


class BaseDensity:
    """A generator density ``f`` with everything the model formulas use.

    Subclasses provide ``pdf``, ``cdf``, ``sf``, ``quantile``, ``isf``,
    ``_mgf_deriv`` and ``_moment``.  Instances are immutable; the only
    mutable state is a memo of raw moments and series coefficients.
    """

    name: str = "base"
    support: SupportInterval
    mgf_domain: tuple[float, float]
    smoothness: int = 4

    def __init__(self):
        self._moments: dict[int, float] = {}
        self._series_cache: dict = {}

    # -- interface -----------------------------------------------------
    def pdf(self, z):
        raise NotImplementedError

    def cdf(self, z):
        raise NotImplementedError

    def sf(self, z):
        raise NotImplementedError

    def quantile(self, u):
        raise NotImplementedError

    def isf(self, v):
        """Inverse survival function, ``quantile(1 - v)`` without rounding."""
        raise NotImplementedError

    def _mgf_deriv(self, k: int, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _moment(self, n: int) -> float:
        return float(self._mgf_deriv(n, np.zeros(1))[0])

    # -- shared --------------------------------------------------------
    def in_mgf_domain(self, t) -> bool:
        lo, hi = self.mgf_domain
        t = np.asarray(t, dtype=float)
        return bool(np.all((t > lo) & (t < hi)))

    def mgf_deriv(self, k: int, t):
        """``k``-th derivative of the moment generating function at ``t``."""
        if k < 0 or int(k) != k:
            raise ValidationError("derivative order must be a non-negative integer")
        if not self.in_mgf_domain(t):
            raise DomainError(
                f"{self.name}: MGF evaluated at {t!r} outside its domain {self.mgf_domain}"
            )
        arr = np.atleast_1d(np.asarray(t, dtype=float))
        out = self._mgf_deriv(int(k), arr)
        if np.ndim(t) == 0:
            return float(out[0])
        return out.reshape(np.shape(t))

    def mgf(self, t):
        return self.mgf_deriv(0, t)

    def moment(self, n: int) -> float:
        """Raw moment ``E[Z**n]``, i.e. the ``n``-th MGF derivative at zero."""
        if n not in self._moments:
            self._moments[n] = 1.0 if n == 0 else self._moment(n)
        return self._moments[n]

    def __repr__(self):
        return f"<BaseDensity {self.name}>"


# ---------------------------------------------------------------------------


def _gamma_derivatives(x: np.ndarray, kmax: int) -> list[np.ndarray]:
    # Gamma' = Gamma * digamma; Leibniz gives the rest recursively
    g = [special.gamma(x)]
    psi = [special.polygamma(j, x) for j in range(kmax)]
    for n in range(1, kmax + 1):
        acc = np.zeros_like(x)
        for j in range(n):
            acc = acc + math.comb(n - 1, j) * g[n - 1 - j] * psi[j]
        g.append(acc)
    return g


class _Gumbel(BaseDensity):
    name = "gumbel"
    support = SupportInterval(-math.inf, math.inf)
    mgf_domain = (-math.inf, 1.0)
    smoothness = 1_000_000

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        with np.errstate(over="ignore"):
            return _scalarize(np.exp(-z - np.exp(-z)), z)

    def cdf(self, z):
        z = np.asarray(z, dtype=float)
        with np.errstate(over="ignore"):
            return _scalarize(np.exp(-np.exp(-z)), z)

    def sf(self, z):
        z = np.asarray(z, dtype=float)
        with np.errstate(over="ignore"):
            return _scalarize(-np.expm1(-np.exp(-z)), z)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore"):
            return _scalarize(-np.log(-np.log(u)), u)

    def isf(self, v):
        v = np.asarray(v, dtype=float)
        with np.errstate(divide="ignore"):
            return _scalarize(-np.log(-np.log1p(-v)), v)

    def _mgf_deriv(self, k, t):
        # M(t) = Gamma(1 - t)  =>  M^(k)(t) = (-1)^k Gamma^(k)(1 - t)
        return (-1.0) ** k * _gamma_derivatives(1.0 - t, k)[k]

    def _moment(self, n):
        # cumulants: gamma, then (j-1)! zeta(j); moments follow recursively
        kappa = [0.0, np.euler_gamma] + [
            math.factorial(j - 1) * float(special.zeta(j)) for j in range(2, n + 1)
        ]
        m = [1.0]
        for j in range(1, n + 1):
            m.append(sum(math.comb(j - 1, i) * kappa[i + 1] * m[j - 1 - i] for i in range(j)))
        return m[n]


class _Exponential(BaseDensity):
    name = "exponential"
    support = SupportInterval(0.0, math.inf, lo_closed=True)
    mgf_domain = (-math.inf, 1.0)
    smoothness = 1_000_000  # smooth on the support interior

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        with np.errstate(over="ignore"):
            return _scalarize(np.where(z >= 0, np.exp(-np.maximum(z, 0.0)), 0.0), z)

    def cdf(self, z):
        z = np.asarray(z, dtype=float)
        return _scalarize(np.where(z > 0, -np.expm1(-np.maximum(z, 0.0)), 0.0), z)

    def sf(self, z):
        z = np.asarray(z, dtype=float)
        return _scalarize(np.where(z > 0, np.exp(-np.maximum(z, 0.0)), 1.0), z)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore"):
            return _scalarize(-np.log1p(-u), u)

    def isf(self, v):
        v = np.asarray(v, dtype=float)
        with np.errstate(divide="ignore"):
            return _scalarize(-np.log(v), v)

    def _mgf_deriv(self, k, t):
        return math.factorial(k) / (1.0 - t) ** (k + 1)

    def _moment(self, n):
        return float(math.factorial(n))


_GUMBEL = _Gumbel()
_EXPONENTIAL = _Exponential()


def gumbel() -> BaseDensity:
    """Standard Gumbel generator; its shape family is the GEV distribution."""
    return _GUMBEL


def exponential() -> BaseDensity:
    """Standard exponential generator; its shape family is the GPD."""
    return _EXPONENTIAL


# ---------------------------------------------------------------------------

_GL20_X, _GL20_W = np.polynomial.legendre.leggauss(20)
_TABLE_PANELS = 256
_QUAD = QuadratureSpec(abs_tol=1e-14, rel_tol=1e-12, max_subdivisions=14)


class _Custom(BaseDensity):
    """Tabulated generator built from a user pdf.

    The cdf is the mass of the nearest table node plus a 20-point
    Gauss-Legendre integral from that node; quantiles are found by Brent's
    method inside the bracketing table panel.
    """

    def __init__(self, pdf, support, mgf_domain, name, smoothness):
        super().__init__()
        self._pdf = pdf
        self.support = support
        self.mgf_domain = (float(mgf_domain[0]), float(mgf_domain[1]))
        self.name = name
        self.smoothness = smoothness
        if not self.mgf_domain[0] < 0.0 < self.mgf_domain[1]:
            raise ValidationError("mgf_domain must be an open interval containing 0")
        self._build_table()

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        with np.errstate(all="ignore"):
            vals = np.asarray(self._pdf(z), dtype=float)
        vals = np.where(self.support.contains(z), vals, 0.0)
        return _scalarize(vals, z)

    def _mass(self, a, b):
        a = np.asarray(a, dtype=float)[..., None]
        b = np.asarray(b, dtype=float)[..., None]
        x = 0.5 * (b - a) * _GL20_X + 0.5 * (b + a)
        return (0.5 * (b - a) * self.pdf(x) * _GL20_W).sum(axis=-1)

    def _find_edge(self, center, direction, peak):
        step = 1.0
        z = center + direction * step
        while self.pdf(z) > 1e-18 * peak or step < 4.0:
            step *= 2.0
            z = center + direction * step
            if step > 1e6:
                raise ValidationError("custom pdf does not decay in the tails")
        return z

    def _build_table(self):
        lo, hi = self.support.lo, self.support.hi
        probe = np.concatenate([-np.logspace(-2, 3, 60), [0.0], np.logspace(-2, 3, 60)])
        if np.isfinite(lo):
            probe = np.concatenate([probe, lo + np.logspace(-6, 3, 60)])
        if np.isfinite(hi):
            probe = np.concatenate([probe, hi - np.logspace(-6, 3, 60)])
        probe = probe[self.support.interior(probe)]
        values = self.pdf(probe)
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValidationError("custom pdf must be finite and non-negative")
        peak = float(values.max())
        if peak <= 0:
            raise ValidationError("custom pdf vanishes on its support")
        center = float(probe[np.argmax(values)])
        zl = lo if np.isfinite(lo) else self._find_edge(center, -1.0, peak)
        zh = hi if np.isfinite(hi) else self._find_edge(center, 1.0, peak)
        left_tail = 0.0 if np.isfinite(lo) else integrate(self.pdf, -np.inf, zl, _QUAD).value
        right_tail = 0.0 if np.isfinite(hi) else integrate(self.pdf, zh, np.inf, _QUAD).value
        nodes = np.linspace(zl, zh, _TABLE_PANELS + 1)
        panel = self._mass(nodes[:-1], nodes[1:])
        self._nodes = nodes
        self._left = left_tail + np.concatenate([[0.0], np.cumsum(panel)])
        self._right = right_tail + np.concatenate([np.cumsum(panel[::-1])[::-1], [0.0]])
        total = self._left[-1] + right_tail
        if abs(total - 1.0) > 1e-8:
            raise ValidationError(f"custom pdf integrates to {total!r}, not 1")

    def _panel(self, z):
        return np.clip(np.searchsorted(self._nodes, z, side="right") - 1, 0, _TABLE_PANELS - 1)

    def cdf(self, z):
        z = np.asarray(z, dtype=float)
        flat = np.atleast_1d(z).ravel()
        out = np.empty_like(flat)
        inside = (flat >= self._nodes[0]) & (flat <= self._nodes[-1])
        i = self._panel(flat[inside])
        out[inside] = self._left[i] + self._mass(self._nodes[i], flat[inside])
        for j in np.flatnonzero(~inside):
            if flat[j] < self._nodes[0]:
                out[j] = self._tail_left(flat[j])
            else:
                out[j] = 1.0 - self._tail_right(flat[j])
        return _scalarize(np.clip(out, 0.0, 1.0).reshape(np.shape(z)), z)

    def sf(self, z):
        z = np.asarray(z, dtype=float)
        flat = np.atleast_1d(z).ravel()
        out = np.empty_like(flat)
        inside = (flat >= self._nodes[0]) & (flat <= self._nodes[-1])
        i = self._panel(flat[inside])
        out[inside] = self._right[i + 1] + self._mass(flat[inside], self._nodes[i + 1])
        for j in np.flatnonzero(~inside):
            if flat[j] > self._nodes[-1]:
                out[j] = self._tail_right(flat[j])
            else:
                out[j] = 1.0 - self._tail_left(flat[j])
        return _scalarize(np.clip(out, 0.0, 1.0).reshape(np.shape(z)), z)

    def _tail_left(self, z):
        if z <= self.support.lo:
            return 0.0
        return integrate(self.pdf, self.support.lo, z, _QUAD).value

    def _tail_right(self, z):
        if z >= self.support.hi:
            return 0.0
        return integrate(self.pdf, z, self.support.hi, _QUAD).value

    def _invert(self, target, table, mass_fn, increasing):
        # bracket inside the table when possible, else walk outward
        if increasing:
            i = int(np.searchsorted(table, target, side="right")) - 1
        else:
            i = int(np.searchsorted(-table, -target, side="right")) - 1
        if 0 <= i < _TABLE_PANELS:
            a, b = self._nodes[i], self._nodes[i + 1]
        elif i < 0:
            b = self._nodes[0]
            a = b - 1.0
            while (mass_fn(a) - target) * (1 if increasing else -1) > 0:
                a = b - 2.0 * (b - a)
        else:
            a = self._nodes[-1]
            b = a + 1.0
            while (mass_fn(b) - target) * (1 if increasing else -1) < 0:
                b = a + 2.0 * (b - a)
        return optimize.brentq(lambda z: mass_fn(z) - target, a, b, xtol=1e-15, rtol=1e-15)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        flat = np.atleast_1d(u).ravel()
        out = np.empty_like(flat)
        for j, uj in enumerate(flat):
            if not 0.0 < uj < 1.0:
                out[j] = self.support.lo if uj <= 0 else self.support.hi
            elif uj > 0.5:
                out[j] = self.isf(1.0 - uj)
            else:
                out[j] = self._invert(uj, self._left, self.cdf, True)
        return _scalarize(out.reshape(np.shape(u)), u)

    def isf(self, v):
        v = np.asarray(v, dtype=float)
        flat = np.atleast_1d(v).ravel()
        out = np.empty_like(flat)
        for j, vj in enumerate(flat):
            if not 0.0 < vj < 1.0:
                out[j] = self.support.hi if vj <= 0 else self.support.lo
            elif vj > 0.5:
                out[j] = self.quantile(1.0 - vj)
            else:
                out[j] = self._invert(vj, self._right, self.sf, False)
        return _scalarize(out.reshape(np.shape(v)), v)

    def _mgf_deriv(self, k, t):
        out = np.empty_like(t)
        for j, tj in enumerate(t):

            def integrand(z, tj=tj):
                p = self.pdf(z)
                with np.errstate(all="ignore"):
                    return np.where(p > 0, z**k * np.exp(tj * z) * p, 0.0)

            # split at zero so each piece has one sign and cancellation
            # (odd moments of symmetric bases) cannot defeat the relative test
            lo, hi = self.support.lo, self.support.hi
            cuts = [lo] + ([0.0] if lo < 0.0 < hi else []) + [hi]
            out[j] = sum(integrate(integrand, a, b, _QUAD).value for a, b in zip(cuts[:-1], cuts[1:]))
        return out


def custom(
    pdf: Callable[[np.ndarray], np.ndarray],
    support=(-math.inf, math.inf),
    mgf_domain=(-math.inf, math.inf),
    name: str = "custom",
    smoothness: int = 4,
) -> BaseDensity:
    """Build a generator from a vectorised density.

    Parameters
    ----------
    pdf : callable
        Density on the real line; values outside ``support`` are ignored.
    support : SupportInterval or (lo, hi)
        Support of the density; infinite ends are allowed.
    mgf_domain : (lo, hi)
        Open interval on which the moment generating function exists.

    Raises
    ------
    ValidationError
        If the density does not integrate to one within ``1e-8``.
    """
    if not isinstance(support, SupportInterval):
        lo, hi = support
        support = SupportInterval(
            float(lo), float(hi), lo_closed=bool(np.isfinite(lo)), hi_closed=bool(np.isfinite(hi))
        )
    return _Custom(pdf, support, mgf_domain, name, smoothness)
