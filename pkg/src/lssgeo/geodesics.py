"""Intrinsic and extrinsic geometry of a location-scale-shape family.

Intrinsic: in ``(u, v, w) = (alpha, beta cos A(xi), beta sin A(xi))`` with
``A' = sqrt(psi)`` the metric is Euclidean, so geodesics are straight
segments and distances are Euclidean norms.

Extrinsic: the Wasserstein geodesic between two members interpolates their
quantile functions linearly.  It leaves the family unless both shapes agree,
which :func:`membership_test` detects by refitting a member.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import ChartError, DomainError, FitError, NonConvergence, ValidationError
from .metric import OmegaParams, omega_to_theta, psi, theta_to_omega
from .model import LssModel, ThetaParams, expm1_ratio
from .numerics import DEFAULT_QUAD, Estimate, QuadratureSpec, integrate

__all__ = [
    "FlatPoint",
    "FlatChart",
    "PathSample",
    "MembershipResult",
    "flat_chart",
    "omega_to_flat",
    "flat_to_omega",
    "intrinsic_geodesic",
    "intrinsic_distance",
    "segment_exit",
    "ot_map",
    "displacement_path",
    "default_u_grid",
    "w2_distance",
    "w2_quantiles",
    "membership_test",
    "membership_threshold",
]

_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)
_MAX_BISECTIONS = 60
_ANGLE_PANELS = 96


@dataclass(frozen=True)
class FlatPoint:
    u: float
    v: float
    w: float

    def __iter__(self):
        return iter((self.u, self.v, self.w))

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v, self.w])


class FlatChart:
    """Angle function ``A(xi) = int_{xi_ref}^{xi} sqrt(psi)`` on an open interval.

    The angle is tabulated at panel breakpoints by 20-point Gauss-Legendre
    quadrature and evaluated between breakpoints by one more Gauss-Legendre
    integral from the nearest breakpoint, so it is accurate to rounding
    everywhere and not only at the nodes.
    """

    def __init__(self, model: LssModel, interval=None, xi_ref: float = 0.0):
        lo, hi = model.shape_interval if interval is None else (float(v) for v in interval)
        slo, shi = model.shape_interval
        if not (slo <= lo < hi <= shi):
            raise ValidationError(f"chart interval ({lo}, {hi}) must lie in {model.shape_interval}")
        if not lo < xi_ref < hi:
            raise ValidationError(f"xi_ref {xi_ref} outside the chart interval ({lo}, {hi})")
        self.model = model
        self.interval = (lo, hi)
        self.xi_ref = float(xi_ref)
        knots, pieces = self._refine(np.union1d(np.linspace(lo, hi, _ANGLE_PANELS + 1), [self.xi_ref]))
        cum = np.concatenate([[0.0], np.cumsum(pieces)])
        self._knots = knots
        self._table = cum - cum[int(np.searchsorted(knots, self.xi_ref))]
        self.angle_lo = float(self._table[0])
        self.angle_hi = float(self._table[-1])
        self.total_angle = self.angle_hi - self.angle_lo
        if not self.total_angle < 2 * math.pi:
            raise ChartError(f"total angle {self.total_angle} is not below 2*pi")

    def __repr__(self):
        return (
            f"FlatChart({self.model.name}, interval={self.interval}, "
            f"angles=({self.angle_lo:.6g}, {self.angle_hi:.6g}))"
        )

    def _refine(self, knots):
        # bisect panels until one rule and its two halves agree; needed where
        # psi blows up just outside the interval
        for _ in range(_MAX_BISECTIONS):
            a, b = knots[:-1], knots[1:]
            mid = 0.5 * (a + b)
            whole = self._gl(a, b)
            halves = self._gl(a, mid) + self._gl(mid, b)
            bad = np.abs(whole - halves) > 1e-15 * np.maximum(1.0, np.abs(halves))
            bad &= (mid > a) & (mid < b)
            if not bad.any():
                return knots, halves
            knots = np.union1d(knots, mid[bad])
        raise NonConvergence("angle table did not resolve the warping coefficient")

    def _gl(self, a, b):
        a = np.asarray(a, dtype=float)[..., None]
        b = np.asarray(b, dtype=float)[..., None]
        x = 0.5 * (b - a) * _GL_X + 0.5 * (b + a)
        root = np.sqrt(psi(self.model, x.ravel())).reshape(x.shape)
        return (0.5 * (b - a) * root * _GL_W).sum(axis=-1)

    def contains_xi(self, xi) -> bool:
        lo, hi = self.interval
        return bool(np.all((np.asarray(xi) > lo) & (np.asarray(xi) < hi)))

    def angle(self, xi):
        xi_in = np.asarray(xi, dtype=float)
        if not self.contains_xi(xi_in):
            raise ChartError(f"shape {xi!r} outside the chart interval {self.interval}")
        flat = np.atleast_1d(xi_in)
        i = np.clip(np.searchsorted(self._knots, flat, side="right") - 1, 0, self._knots.size - 2)
        out = self._table[i] + self._gl(self._knots[i], flat)
        return float(out[0]) if xi_in.ndim == 0 else out.reshape(xi_in.shape)

    def shape_of(self, angle: float) -> float:
        """Inverse of :meth:`angle`."""
        if not self.angle_lo < angle < self.angle_hi:
            raise ChartError(f"angle {angle!r} outside the chart cone ({self.angle_lo}, {self.angle_hi})")
        i = int(np.clip(np.searchsorted(self._table, angle, side="right") - 1, 0, self._knots.size - 2))
        a, b = self._knots[i], self._knots[i + 1]
        lo, hi = self.interval
        a, b = max(a, np.nextafter(lo, hi)), min(b, np.nextafter(hi, lo))
        fa, fb = self.angle(a) - angle, self.angle(b) - angle
        if fa == 0.0:
            return float(a)
        if fb == 0.0:
            return float(b)
        return optimize.brentq(lambda x: self.angle(x) - angle, a, b, xtol=1e-16, rtol=1e-15)

    def normalize_angle(self, angle: float) -> float | None:
        """Representative of ``angle`` modulo 2 pi inside the cone, if any."""
        for k in (0.0, -1.0, 1.0):
            cand = angle + 2 * math.pi * k
            if self.angle_lo < cand < self.angle_hi:
                return cand
        return None


def flat_chart(model: LssModel, interval=None, xi_ref: float = 0.0) -> FlatChart:
    return FlatChart(model, interval, xi_ref)


def _omega(omega) -> OmegaParams:
    return omega if isinstance(omega, OmegaParams) else OmegaParams(*omega)


def omega_to_flat(chart: FlatChart, omega) -> FlatPoint:
    omega = _omega(omega)
    a = chart.angle(omega.xi)
    return FlatPoint(omega.alpha, omega.beta * math.cos(a), omega.beta * math.sin(a))


def flat_to_omega(chart: FlatChart, point) -> OmegaParams:
    u, v, w = point
    beta = math.hypot(v, w)
    if beta == 0.0:
        raise ChartError("flat point on the cone apex (zero standard deviation)")
    angle = chart.normalize_angle(math.atan2(w, v))
    if angle is None:
        raise ChartError(f"flat point ({u}, {v}, {w}) outside the chart cone")
    return OmegaParams(u, beta, chart.shape_of(angle))


# ---------------------------------------------------------------------------
# intrinsic geodesics


def _cross(a, b):
    return a[0] * b[1] - a[1] * b[0]


def segment_exit(chart: FlatChart, p1: FlatPoint, p2: FlatPoint) -> float | None:
    """First parameter in ``[0, 1]`` where the straight segment leaves the cone."""
    a = np.array([p1.v, p1.w])
    b = np.array([p2.v, p2.w])
    d = b - a
    crosses = []
    # through the apex
    if abs(_cross(a, b)) <= 1e-15 * np.dot(a, a) and np.dot(a, b) < 0:
        crosses.append(float(np.linalg.norm(a) / (np.linalg.norm(a) + np.linalg.norm(b))))
    start = chart.normalize_angle(math.atan2(a[1], a[0]))
    if start is None:
        return 0.0
    sweep = math.atan2(_cross(a, b), float(np.dot(a, b)))
    end = start + sweep
    for bound in (chart.angle_lo, chart.angle_hi):
        if min(start, end) < bound < max(start, end) or end == bound:
            e = np.array([math.cos(bound), math.sin(bound)])
            denom = _cross(e, d)
            if denom != 0.0:
                crosses.append(float(np.clip(-_cross(e, a) / denom, 0.0, 1.0)))
    return min(crosses) if crosses else None


def _endpoints(chart, omega1, omega2):
    omega1, omega2 = _omega(omega1), _omega(omega2)
    p1, p2 = omega_to_flat(chart, omega1), omega_to_flat(chart, omega2)
    exit_t = segment_exit(chart, p1, p2)
    if exit_t is not None:
        raise ChartError(f"geodesic leaves the chart at t = {exit_t:.17g}", exit_t=exit_t)
    return omega1, omega2, p1, p2


def intrinsic_geodesic(chart: FlatChart, omega1, omega2, t: float) -> OmegaParams:
    """Point at parameter ``t`` on the intrinsic geodesic (a flat-chart segment)."""
    if not 0.0 <= t <= 1.0:
        raise ValidationError("t must lie in [0, 1]")
    omega1, omega2, p1, p2 = _endpoints(chart, omega1, omega2)
    if t == 0.0:
        return omega1
    if t == 1.0:
        return omega2
    q = (1.0 - t) * p1.as_array() + t * p2.as_array()
    return flat_to_omega(chart, FlatPoint(*q))


def intrinsic_distance(chart: FlatChart, omega1, omega2) -> float:
    _, _, p1, p2 = _endpoints(chart, omega1, omega2)
    return float(np.linalg.norm(p1.as_array() - p2.as_array()))


# ---------------------------------------------------------------------------
# optimal transport


def ot_map(model: LssModel, theta1, theta2, x):
    """Monotone transport ``Q2(P1(x))``, computed through the base variate."""
    theta1, theta2 = model.check(theta1), model.check(theta2)
    x_in = np.asarray(x, dtype=float)
    support = model.support(theta1)
    if not np.all(support.contains(x_in)):
        raise DomainError(f"x outside the support {support} of the source member")
    _, z = model.standardize(theta1, x_in)
    out = model.transform(theta2, z)
    return float(out) if x_in.ndim == 0 else out


def default_u_grid(n: int = 200) -> np.ndarray:
    """Midpoint grid of ``n`` levels in (0, 1)."""
    return (np.arange(n) + 0.5) / n


def _base_variates(model: LssModel, u):
    u = np.asarray(u, dtype=float)
    if not np.all((u > 0) & (u < 1)):
        raise DomainError("levels must lie in (0, 1)")
    lower = u < 0.5
    z = np.empty_like(u)
    z[lower] = model.base.quantile(u[lower])
    z[~lower] = model.base.isf(1.0 - u[~lower])
    return z


@dataclass(frozen=True)
class PathSample:
    t: float
    u: np.ndarray
    quantiles: np.ndarray
    x: np.ndarray | None = None
    density: np.ndarray | None = None
    endpoints: tuple = field(default=(), repr=False)


def displacement_path(
    model: LssModel, theta1, theta2, t: float, u_grid=None, x_grid=None
) -> PathSample:
    """McCann interpolant between two members at parameter ``t``.

    Quantiles are ``(1 - t) Q1 + t Q2``.  The interpolant is the law of
    ``X_t(Z) = (1 - t) T1(Z) + t T2(Z)`` for a base variate ``Z``, so its
    density on ``x_grid`` is ``f(z) / X_t'(z)`` at the root ``X_t(z) = x``.
    """
    if not 0.0 <= t <= 1.0:
        raise ValidationError("t must lie in [0, 1]")
    theta1, theta2 = model.check(theta1), model.check(theta2)
    u = default_u_grid() if u_grid is None else np.asarray(u_grid, dtype=float)
    if t == 0.0:
        q = model.quantile(theta1, u)
    elif t == 1.0:
        q = model.quantile(theta2, u)
    else:
        z = _base_variates(model, u)
        q = (1.0 - t) * model.transform(theta1, z) + t * model.transform(theta2, z)
    dens = None
    xs = None
    if x_grid is not None:
        xs = np.asarray(x_grid, dtype=float)
        if t == 0.0:
            dens = model.density(theta1, xs)
        elif t == 1.0:
            dens = model.density(theta2, xs)
        else:
            dens = _path_density(model, theta1, theta2, t, xs)
    return PathSample(float(t), u, np.asarray(q), xs, dens, (theta1, theta2))


def _path_map(model, theta1, theta2, t):
    def xmap(z):
        return (1.0 - t) * model.transform(theta1, z) + t * model.transform(theta2, z)

    def dxmap(z):
        with np.errstate(all="ignore"):
            return (1.0 - t) * theta1.sigma * np.exp(theta1.xi * z) + t * theta2.sigma * np.exp(
                theta2.xi * z
            )

    return xmap, dxmap


def _path_density(model, theta1, theta2, t, xs):
    xmap, dxmap = _path_map(model, theta1, theta2, t)
    bs = model.base.support
    zlo = bs.lo if math.isfinite(bs.lo) else -700.0
    zhi = bs.hi if math.isfinite(bs.hi) else 700.0
    xlo, xhi = float(xmap(zlo)), float(xmap(zhi))
    out = np.zeros_like(xs)
    for j, x in enumerate(xs):
        if x < xlo or x > xhi:
            continue
        if x == xlo:
            z = zlo
        elif x == xhi:
            z = zhi
        else:
            z = _bracketed_root(lambda s: float(xmap(s)) - x, zlo, zhi)
        with np.errstate(all="ignore"):
            val = float(model.base.pdf(z)) / float(dxmap(z))
        out[j] = val if math.isfinite(val) else 0.0
    return out


def _bracketed_root(fn, zlo, zhi):
    a, b = -1.0, 1.0
    a, b = max(a, zlo), min(b, zhi)
    while fn(a) > 0 and a > zlo:
        a = max(zlo, a * 2 if a < 0 else a - 1.0)
    while fn(b) < 0 and b < zhi:
        b = min(zhi, b * 2 if b > 0 else b + 1.0)
    return optimize.brentq(fn, a, b, xtol=1e-15, rtol=1e-15)


def w2_quantiles(q1, q2, spec: QuadratureSpec = DEFAULT_QUAD) -> Estimate:
    """Squared distance ``int_0^1 (q1(u) - q2(u))**2 du`` for quantile callables."""

    def fn(u):
        return (np.asarray(q1(u)) - np.asarray(q2(u))) ** 2

    a = integrate(fn, 0.0, 0.5, spec)
    b = integrate(fn, 0.5, 1.0, spec)
    return Estimate(a.value + b.value, a.error + b.error)


def w2_distance(model: LssModel, theta1, theta2, spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Exact L2-Wasserstein distance by quadrature over quantile levels."""
    theta1, theta2 = model.check(theta1), model.check(theta2)
    base = model.base

    def diff(z):
        return model.transform(theta1, z) - model.transform(theta2, z)

    lower = integrate(lambda u: diff(base.quantile(u)) ** 2, 0.0, 0.5, spec)
    upper = integrate(lambda v: diff(base.isf(v)) ** 2, 0.0, 0.5, spec)
    return math.sqrt(max(lower.value + upper.value, 0.0))


# ---------------------------------------------------------------------------
# membership


@dataclass(frozen=True)
class MembershipResult:
    residual: float
    theta: ThetaParams

    def __iter__(self):
        return iter((self.residual, self.theta))


def _profile_fit(z, q, xi):
    basis = np.column_stack([np.ones_like(z), z * expm1_ratio(xi * z)])
    coef, *_ = np.linalg.lstsq(basis, q, rcond=None)
    r = basis @ coef - q
    return float(r @ r), coef


def membership_test(model: LssModel, path_point: PathSample, fit_grid=None) -> MembershipResult:
    """Least-squares refit of a family member to the quantiles of ``path_point``.

    Returns the root-mean-square quantile residual and the fitted member.
    """
    u = np.asarray(path_point.u, dtype=float)
    q = np.asarray(path_point.quantiles, dtype=float)
    if u.size < 50:
        raise ValidationError("membership test needs quantiles on at least 50 levels")
    z = _base_variates(model, u)
    lo, hi = model.shape_interval
    grid = np.linspace(lo, hi, 91)[1:-1] if fit_grid is None else np.asarray(fit_grid, dtype=float)
    rss = np.array([_profile_fit(z, q, xi)[0] for xi in grid])
    k = int(np.argmin(rss))
    a = grid[max(k - 1, 0)]
    b = grid[min(k + 1, grid.size - 1)]
    if a < b:
        res = optimize.minimize_scalar(
            lambda xi: _profile_fit(z, q, xi)[0],
            bounds=(a, b),
            method="bounded",
            options={"xatol": 1e-12},
        )
        xi0 = float(res.x) if res.fun <= rss[k] else float(grid[k])
    else:
        xi0 = float(grid[k])
    _, (mu0, sigma0) = _profile_fit(z, q, xi0)
    if not sigma0 > 0:
        raise FitError("profile fit produced a non-positive scale")

    def resid(p):
        mu, sigma, xi = p
        return mu + sigma * z * expm1_ratio(xi * z) - q

    def jac(p):
        mu, sigma, xi = p
        y = xi * z
        e1 = expm1_ratio(y)
        with np.errstate(all="ignore"):
            # d/dxi of sigma z expm1(xi z)/(xi z) = sigma z^2 phi(xi z)
            small = np.abs(y) < 1e-3
            ys = np.where(small, 1.0, y)
            phi = np.where(
                small, 0.5 + y / 3.0 + y * y / 8.0, (ys * np.exp(ys) - np.expm1(ys)) / ys**2
            )
        return np.column_stack([np.ones_like(z), z * e1, sigma * z * z * phi])

    sol = optimize.least_squares(
        resid, [mu0, sigma0, xi0], jac=jac, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15
    )
    if not np.all(np.isfinite(sol.x)) or sol.status < 0 or not sol.x[1] > 0:
        raise FitError(f"least-squares refinement failed: {sol.message}")
    start_rms = math.sqrt(float(np.mean(resid([mu0, sigma0, xi0]) ** 2)))
    rms = math.sqrt(float(np.mean(sol.fun**2)))
    if rms > start_rms:
        return MembershipResult(start_rms, ThetaParams(mu0, sigma0, xi0))
    return MembershipResult(rms, ThetaParams(*sol.x))


def membership_threshold(
    model: LssModel, n_pairs: int = 20, seed: int = 0, u_grid=None
) -> tuple[float, np.ndarray]:
    """Decision threshold: ten times the 99th percentile of residuals of
    displacement midpoints between members sharing a shape.

    Returns ``(threshold, baseline_residuals)``.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    lo, hi = model.shape_interval
    res = []
    for _ in range(n_pairs):
        xi = rng.uniform(0.8 * lo, 0.8 * hi)
        th1 = ThetaParams(rng.uniform(-2, 2), rng.uniform(0.5, 2), xi)
        th2 = ThetaParams(rng.uniform(-2, 2), rng.uniform(0.5, 2), xi)
        for t in (0.0, 0.25, 0.5, 0.75):
            res.append(membership_test(model, displacement_path(model, th1, th2, t, u_grid)).residual)
    res = np.array(res)
    return 10.0 * float(np.percentile(res, 99)), res
