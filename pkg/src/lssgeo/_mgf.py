"""Stable evaluation of ``sum c * xi**p * M^(k)(s*xi) / xi**q``.

Every shape-dependent quantity of the model (mean and variance of the
standardised member, the information matrix entries, the score constant) is
such a combination.  The leading orders cancel near ``xi = 0`` so direct
evaluation loses up to ``4 * log10(1/|xi|)`` digits there.  Inside a small
radius we use the Taylor series of the combination instead, built from the
exact raw moments ``M^(n)(0)`` of the base density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["Term", "MgfCombo", "series_threshold"]

# with 60 terms the series is accurate to rounding for |xi| up to a quarter
# of the MGF radius; 0.1 keeps direct evaluation to ~1e-12 relative for the
# 1/xi**4 combinations and well inside that radius for GEV and GPD
SERIES_TERMS = 60
SERIES_XI = 0.1


@dataclass(frozen=True)
class Term:
    coef: float
    power: int  # explicit factor xi**power
    order: int  # derivative order k of M
    scale: float  # M is evaluated at scale * xi


@dataclass(frozen=True)
class MgfCombo:
    terms: tuple[Term, ...]
    shift: int  # the whole sum is divided by xi**shift

    def derivative(self) -> "MgfCombo":
        """d/dxi of the combination, again as a combination."""
        out = []
        for t in self.terms:
            # d/dxi [c xi^p M^(k)(s xi) / xi^q] with the xi^-q kept as shift
            if t.power:
                out.append(Term(t.coef * t.power, t.power - 1, t.order, t.scale))
            if t.scale:
                out.append(Term(t.coef * t.scale, t.power, t.order + 1, t.scale))
            out.append(Term(-t.coef * self.shift, t.power - 1, t.order, t.scale))
        # multiply through by xi so that powers stay non-negative
        out = tuple(Term(t.coef, t.power + 1, t.order, t.scale) for t in out)
        return MgfCombo(_merge(out), self.shift + 1)

    def max_scale(self) -> float:
        return max(abs(t.scale) for t in self.terms)

    def direct(self, base, xi):
        xi = np.asarray(xi, dtype=float)
        acc = np.zeros_like(xi)
        for t in self.terms:
            if t.scale == 0.0:
                m = base.moment(t.order)
            else:
                m = base.mgf_deriv(t.order, t.scale * xi)
            acc = acc + t.coef * xi**t.power * m
        return acc / xi**self.shift

    def numerator_coefficients(self, base, n: int) -> np.ndarray:
        """Taylor coefficients ``N_j`` of the numerator, j = 0..n-1."""
        out = np.zeros(n)
        for t in self.terms:
            for j in range(t.power, n):
                # xi^p M^(k)(s xi) = sum_i s^i m_{k+i} / i! xi^(p+i)
                i = j - t.power
                if t.scale == 0.0 and i > 0:
                    continue
                out[j] += t.coef * t.scale**i / math.factorial(i) * base.moment(t.order + i)
        return out

    def series_coefficients(self, base) -> np.ndarray:
        key = (self, "series")
        cache = base._series_cache
        if key not in cache:
            num = self.numerator_coefficients(base, SERIES_TERMS + self.shift)
            cache[key] = num[self.shift :]
        return cache[key]

    def low_order_residual(self, base) -> float:
        """Largest numerator coefficient below ``xi**shift``; zero in exact arithmetic."""
        num = self.numerator_coefficients(base, self.shift)
        return float(np.max(np.abs(num))) if num.size else 0.0

    def series(self, base, xi):
        coefs = self.series_coefficients(base)
        return np.polynomial.polynomial.polyval(np.asarray(xi, dtype=float), coefs)

    def __call__(self, base, xi):
        xi_arr = np.asarray(xi, dtype=float)
        flat = np.atleast_1d(xi_arr)
        small = np.abs(flat) < series_threshold(base, self)
        out = np.empty_like(flat)
        if small.any():
            out[small] = self.series(base, flat[small])
        if (~small).any():
            out[~small] = self.direct(base, flat[~small])
        if xi_arr.ndim == 0:
            return float(out[0])
        return out.reshape(xi_arr.shape)


def series_threshold(base, combo: MgfCombo) -> float:
    lo, hi = base.mgf_domain
    radius = min(-lo, hi) / combo.max_scale()
    return min(SERIES_XI, 0.2 * radius)


def _merge(terms):
    acc: dict[tuple, float] = {}
    for t in terms:
        key = (t.power, t.order, t.scale)
        acc[key] = acc.get(key, 0.0) + t.coef
    return tuple(Term(c, *k) for k, c in sorted(acc.items()) if c != 0.0)


def _combo(shift, *terms):
    return MgfCombo(tuple(Term(*t) for t in terms), shift)


# m_xi = (M(xi) - 1) / xi : mean of the standardised member
MEAN = _combo(1, (1, 0, 0, 1), (-1, 0, 0, 0))
# (M(2xi) - 2M(xi) + 1) / xi^2 = s^2 + m^2
SECOND = _combo(2, (1, 0, 0, 2), (-2, 0, 0, 1), (1, 0, 0, 0))
# (xi M'(xi) - M(xi) + 1) / xi^2 = dm/dxi
MEAN_D = _combo(2, (1, 1, 1, 1), (-1, 0, 0, 1), (1, 0, 0, 0))
# (xi M'(2xi) - xi M'(xi) - M(2xi) + 2M(xi) - 1) / xi^3 = s s' + m m'
SECOND_HALF_D = _combo(
    3, (1, 1, 1, 2), (-1, 1, 1, 1), (-1, 0, 0, 2), (2, 0, 0, 1), (-1, 0, 0, 0)
)
# (xi^2 M''(2xi) - 2xi M'(2xi) + 2xi M'(xi) + M(2xi) - 2M(xi) + 1) / xi^4
SHAPE_SHAPE = _combo(
    4,
    (1, 2, 2, 2),
    (-2, 1, 1, 2),
    (2, 1, 1, 1),
    (1, 0, 0, 2),
    (-2, 0, 0, 1),
    (1, 0, 0, 0),
)
# (xi M'(2xi)/2 - 3M(2xi)/4 + M(xi) - 1/4) / xi^3 : constant of the shape score
SCORE_CONST = _combo(3, (0.5, 1, 1, 2), (-0.75, 0, 0, 2), (1, 0, 0, 1), (-0.25, 0, 0, 0))
