"""Invariant suite run by ``lssgeo verify``.

Each check measures a deviation and compares it with a tolerance.  The
suite is deterministic; Monte Carlo checks use fixed seeds.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .base_density import BaseDensity
from .geodesics import (
    displacement_path,
    flat_chart,
    flat_to_omega,
    intrinsic_distance,
    intrinsic_geodesic,
    membership_test,
    membership_threshold,
    omega_to_flat,
    ot_map,
    w2_distance,
)
from .metric import (
    jacobian_omega,
    omega_to_theta,
    psi,
    theta_to_omega,
    wim_numeric,
    wim_omega,
    wim_theta,
)
from .model import LssModel, ThetaParams, gev, gpd
from .numerics import DiffSpec, derivative, integrate
from .scores import INDICES, continuity_residual, score, score_dx, score_numeric

__all__ = ["Check", "run_suite", "FAMILIES"]

FAMILIES: dict[str, Callable[[], LssModel]] = {"gev": gev, "gpd": gpd}


@dataclass(frozen=True)
class Check:
    name: str
    deviation: float
    tolerance: float
    passed: bool
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} {self.name} deviation={self.deviation:.3e} "
            f"tolerance={self.tolerance:.1e} time={self.seconds:.2f}s"
        )


def _check(name, tol, fn, greater=False):
    t0 = time.perf_counter()
    dev = float(fn())
    ok = dev > tol if greater else dev <= tol
    if math.isnan(dev):
        ok = False
    return Check(name, dev, tol, ok, time.perf_counter() - t0)


def _rel(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


# ---------------------------------------------------------------------------


def _base_checks(base: BaseDensity) -> Iterator[Check]:
    sup = base.support
    lo = sup.lo if math.isfinite(sup.lo) else -4.0
    hi = 12.0
    grid = np.linspace(lo, hi, 1002)[1:-1]

    def roundtrip():
        u = base.cdf(grid)
        keep = (u > 0) & (u < 1)
        return np.max(np.abs(base.quantile(u[keep]) - grid[keep]))

    yield _check("base.quantile_cdf_roundtrip", 1e-9, roundtrip)
    yield _check("base.normalization", 1e-10, lambda: abs(integrate(base.pdf, sup.lo, sup.hi).value - 1))

    def mgf_fd():
        worst = 0.0
        spec = {1: DiffSpec(0.05, 4), 2: DiffSpec(0.1, 5), 3: DiffSpec(0.15, 5), 4: DiffSpec(0.1, 4)}
        for t in (-0.5, 0.0, 0.3):
            for k in range(1, 5):
                fd = derivative(lambda s: base.mgf_deriv(0, s), t, k, spec[k]).value
                worst = max(worst, abs(fd / base.mgf_deriv(k, t) - 1))
        return worst

    yield _check("base.mgf_derivatives", 1e-7, mgf_fd)


def _model_checks(model: LssModel) -> Iterator[Check]:
    thetas = [ThetaParams(0.3, 1.7, xi) for xi in (-0.4, -0.1, 0.0, 0.1, 0.4)]

    def normalization():
        worst = 0.0
        for th in thetas:
            s = model.support(th)
            mass = integrate(lambda x: model.density(th, x), s.lo, s.hi).value
            worst = max(worst, abs(mass - 1))
        return worst

    yield _check("model.normalization", 1e-8, normalization)

    def cdf_monotone():
        worst = 0.0
        xs = np.linspace(-2.0, 6.0, 100)
        xis = np.linspace(-0.4, 0.4, 20)
        prev = None
        for xi in xis:
            c = model.cdf((0.0, 1.0, xi), xs)
            if prev is not None:
                worst = max(worst, float(np.max(c - prev)))
            prev = c
        return max(worst, 0.0)

    yield _check("model.cdf_nonincreasing_in_shape", 1e-10, cdf_monotone)

    def roundtrip():
        worst = 0.0
        for th in thetas:
            x = model.quantile(th, np.linspace(0.001, 0.999, 200))
            worst = max(worst, float(np.max(np.abs(model.quantile(th, model.cdf(th, x)) - x) / np.maximum(1, np.abs(x)))))
        return worst

    yield _check("model.quantile_cdf_roundtrip", 1e-8, roundtrip)

    def moments():
        worst = 0.0
        for xi in (-0.3, 0.2):
            th = ThetaParams(0.0, 1.0, xi)
            for r in (0, 1, 2):
                for k in range(4):
                    closed = model.moment_T(th, r, k)

                    def g(x, r=r, k=k, th=th):
                        t = 1 + th.xi * x
                        with np.errstate(all="ignore"):
                            return np.where(t > 0, t**r * np.log(np.where(t > 0, t, 1.0)) ** k, 0.0)

                    quad = model.expect(th, g).value
                    worst = max(worst, abs(quad - closed) / max(abs(closed), 1e-12))
        return worst

    yield _check("model.moment_identity", 1e-7, moments)

    def monte_carlo():
        th = ThetaParams(0.5, 1.3, 0.15)
        n = 1_000_000
        x = model.sample(th, n, seed=2024)
        mean, var = model.mean_var(th)
        se_mean = math.sqrt(var / n)
        centered = (x - mean) ** 2
        se_var = float(np.std(centered)) / math.sqrt(n)
        return max(abs(x.mean() - mean) / se_mean, abs(centered.mean() - var) / se_var)

    yield _check("model.monte_carlo_mean_var_in_se", 4.0, monte_carlo)


def _score_checks(model: LssModel) -> Iterator[Check]:
    th = ThetaParams(0.0, 1.0, 0.2 if model.name == "gev" else -0.2)
    u = np.linspace(0.01, 0.99, 200)
    x = model.quantile(th, u)

    def mean_zero():
        return max(abs(model.expect(th, lambda y, w=w: score(model, th, w, y)).value) for w in INDICES)

    yield _check("scores.mean_zero", 1e-8, mean_zero)

    def pde():
        r = np.array([continuity_residual(model, th, "xi", xx) for xx in x])
        return float(np.max(np.abs(r[:, 0] - r[:, 1])) / np.max(np.abs(r[:, 1])))

    yield _check("scores.continuity_residual", 1e-5, pde)

    def oracle():
        return max(np.max(np.abs(score_numeric(model, th, w, x) - score(model, th, w, x))) for w in INDICES)

    yield _check("scores.numeric_oracle", 1e-5, oracle)

    def continuity_at_zero():
        base = ThetaParams(0.0, 1.5, 0.0)
        worst = 0.0
        xs = model.quantile(base, np.linspace(0.05, 0.95, 50))
        for w in INDICES:
            s0 = score(model, base, w, xs)
            for d in (1e-5, -1e-5):
                worst = max(worst, float(np.max(np.abs(score(model, base.replace(xi=d), w, xs) - s0))))
        return worst / base.sigma**2

    yield _check("scores.continuity_in_shape_at_zero", 1e-4, continuity_at_zero)

    def dx_fd():
        worst = 0.0
        for w in INDICES:
            for xx in x[::20]:
                fd = derivative(lambda y: score(model, th, w, y), xx, 1, DiffSpec(0.01, 4)).value
                an = score_dx(model, th, w, xx)
                worst = max(worst, abs(fd - an) / max(abs(an), 1e-3))
        return worst

    yield _check("scores.dx_matches_fd", 1e-6, dx_fd)


def _metric_checks(model: LssModel, corrupt=None) -> Iterator[Check]:
    def closed(th):
        g = wim_theta(model, th).entries.copy()
        if corrupt is not None:
            i, j, delta = corrupt
            g[i, j] += delta
            if i != j:
                g[j, i] += delta
        return g

    def oracle():
        worst = 0.0
        for sigma in (0.5, 1.0, 2.0):
            for xi in (-0.4, -0.25, -0.1, 0.0, 0.05, 0.15, 0.25, 0.35, 0.42, 0.45 - 1e-3):
                th = ThetaParams(0.0, sigma, xi)
                a = closed(th)
                b = wim_numeric(model, th).entries
                worst = max(worst, float(np.max(np.abs(a - b)) / np.max(np.abs(a))))
        return worst

    yield _check("metric.wim_closed_vs_quadrature", 1e-6, oracle)

    def pullback():
        rng = np.random.Generator(np.random.Philox(7))
        worst = 0.0
        for _ in range(20):
            th = ThetaParams(rng.uniform(-1, 1), rng.uniform(0.5, 2), rng.uniform(-0.4, 0.4))
            om = theta_to_omega(model, th)
            g = wim_theta(model, omega_to_theta(model, om)).pullback(jacobian_omega(model, om), "omega")
            worst = max(worst, _rel(g.entries, wim_omega(model, om).entries))
        return worst

    yield _check("metric.omega_pullback", 1e-9, pullback)

    def psd():
        worst = 0.0
        for xi in np.linspace(-0.44, 0.44, 23):
            worst = min(worst, wim_theta(model, (0.0, 1.0, xi)).min_eigenvalue())
        return max(0.0, -worst)

    yield _check("metric.positive_semidefinite", 1e-10, psd)

    yield _check(
        "metric.psi_nonnegative",
        0.0,
        lambda: max(0.0, -float(np.min(psi(model, np.linspace(-0.449, 0.449, 901))))),
    )


def _geodesic_checks(model: LssModel) -> Iterator[Check]:
    chart = flat_chart(model)
    rng = np.random.Generator(np.random.Philox(11))
    omegas = [
        theta_to_omega(model, ThetaParams(rng.uniform(-1, 1), rng.uniform(0.5, 2), rng.uniform(-0.4, 0.4)))
        for _ in range(20)
    ]

    def roundtrip():
        worst = 0.0
        for om in omegas:
            back = flat_to_omega(chart, omega_to_flat(chart, om))
            worst = max(worst, float(np.max(np.abs(back.as_array() - om.as_array()))))
        return worst

    yield _check("geodesics.flat_roundtrip", 1e-10, roundtrip)

    def flat_pullback():
        worst = 0.0
        for om in omegas:
            base = om.as_array()
            jac = np.empty((3, 3))
            for k in range(3):
                def comp(s, k=k, c=None):
                    p = base.copy()
                    p[k] = s
                    return omega_to_flat(chart, p).as_array()

                for c in range(3):
                    jac[c, k] = derivative(lambda s, k=k, c=c: comp(s, k)[c], base[k], 1, DiffSpec(1e-3, 4)).value
            worst = max(worst, _rel(jac.T @ jac, wim_omega(model, om).entries))
        return worst

    yield _check("geodesics.flat_pullback_identity", 1e-7, flat_pullback)

    threshold, _ = membership_threshold(model)
    t1 = ThetaParams(0.0, 1.0, 0.2)
    t2 = ThetaParams(2.0, 1.5, 0.4)
    w1, w2 = theta_to_omega(model, t1), theta_to_omega(model, t2)

    yield _check(
        "geodesics.extrinsic_gap",
        1e-4,
        lambda: intrinsic_distance(chart, w1, w2) - w2_distance(model, t1, t2),
        greater=True,
    )
    yield _check(
        "geodesics.midpoint_not_member",
        threshold,
        lambda: membership_test(model, displacement_path(model, t1, t2, 0.5)).residual,
        greater=True,
    )

    def intrinsic_members():
        worst = 0.0
        for t in np.linspace(0, 1, 5):
            th = omega_to_theta(model, intrinsic_geodesic(chart, w1, w2, t))
            worst = max(worst, membership_test(model, displacement_path(model, th, th, 0.0)).residual)
        return worst

    yield _check("geodesics.intrinsic_waypoints_members", 1e-8, intrinsic_members)

    def leaf():
        s1 = ThetaParams(-0.5, 0.8, 0.1)
        s2 = ThetaParams(1.0, 1.9, 0.1)
        o1, o2 = theta_to_omega(model, s1), theta_to_omega(model, s2)
        gap = abs(intrinsic_distance(chart, o1, o2) - w2_distance(model, s1, s2))
        res = max(membership_test(model, displacement_path(model, s1, s2, t)).residual for t in (0.25, 0.5, 0.75))
        return max(gap, res)

    yield _check("geodesics.same_shape_totally_geodesic", 1e-6, leaf)

    def ot_monotone():
        th_a, th_b = ThetaParams(0, 1, 0.3), ThetaParams(1, 2, -0.2)
        x = model.quantile(th_a, np.linspace(0.0005, 0.9995, 1000))
        return max(0.0, -float(np.min(np.diff(ot_map(model, th_a, th_b, x)))))

    yield _check("geodesics.ot_map_monotone", 0.0, ot_monotone)

    def symmetry():
        a = displacement_path(model, t1, t2, 0.3).quantiles
        b = displacement_path(model, t2, t1, 0.7).quantiles
        return float(np.max(np.abs(a - b)))

    yield _check("geodesics.interpolation_symmetry", 1e-12, symmetry)


def run_suite(family: str, corrupt_wim=None) -> Iterator[Check]:
    """Yield checks for ``family`` as they complete."""
    model = FAMILIES[family]()
    yield from _base_checks(model.base)
    yield from _model_checks(model)
    yield from _score_checks(model)
    yield from _metric_checks(model, corrupt_wim)
    yield from _geodesic_checks(model)
