"""Wasserstein information matrices, the shape profile and the mean/sd chart."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from . import _mgf
from .errors import DomainError, ValidationError
from .model import LssModel, ThetaParams
from .numerics import DEFAULT_QUAD, QuadratureSpec
from .scores import score_dx

__all__ = [
    "OmegaParams",
    "ShapeProfile",
    "Metric3",
    "shape_profile",
    "psi",
    "wim_theta",
    "wim_numeric",
    "theta_to_omega",
    "omega_to_theta",
    "wim_omega",
    "jacobian_omega",
]

CHARTS = ("theta", "omega", "flat")


@dataclass(frozen=True)
class OmegaParams:
    """Mean ``alpha``, standard deviation ``beta`` and shape ``xi``."""

    alpha: float
    beta: float
    xi: float

    def __post_init__(self):
        for name in ("alpha", "beta", "xi"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValidationError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if not self.beta > 0:
            raise ValidationError(f"beta must be positive, got {self.beta!r}")

    def __iter__(self):
        return iter((self.alpha, self.beta, self.xi))

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.xi])


@dataclass(frozen=True)
class ShapeProfile:
    xi: float
    m: float
    s: float
    m_prime: float
    s_prime: float
    psi: float


@dataclass(frozen=True)
class Metric3:
    entries: np.ndarray
    chart: str

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        if entries.shape != (3, 3):
            raise ValidationError("a Metric3 needs a 3x3 matrix")
        if self.chart not in CHARTS:
            raise ValidationError(f"unknown chart {self.chart!r}")
        scale = max(1.0, float(np.max(np.abs(entries))))
        if np.max(np.abs(entries - entries.T)) > 1e-12 * scale:
            raise ValidationError("metric entries are not symmetric")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    def __getitem__(self, idx):
        return self.entries[idx]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.entries).min())

    def is_psd(self, tol: float = 1e-10) -> bool:
        return self.min_eigenvalue() >= -tol

    def pullback(self, jacobian, chart: str) -> "Metric3":
        """``J^T G J`` for ``J = d(this chart) / d(new chart)``."""
        j = np.asarray(jacobian, dtype=float)
        g = j.T @ self.entries @ j
        return Metric3(0.5 * (g + g.T), chart)

    def to_csv(self) -> str:
        buf = io.StringIO()
        for row in self.entries:
            buf.write(",".join(_fmt(v) for v in row) + "\n")
        return buf.getvalue()


def _fmt(value: float) -> str:
    return format(float(value) + 0.0, ".17g")


# ---------------------------------------------------------------------------


def _profile_arrays(model: LssModel, xi):
    base = model.base
    m = _mgf.MEAN(base, xi)
    second = _mgf.SECOND(base, xi)
    m_p = _mgf.MEAN_D(base, xi)
    half_d = _mgf.SECOND_HALF_D(base, xi)
    i33 = _mgf.SHAPE_SHAPE(base, xi)
    s2 = second - m * m
    s = np.sqrt(s2)
    s_p = (half_d - m * m_p) / s
    ps = (i33 - s_p * s_p - m_p * m_p) / s2
    return m, s, m_p, s_p, ps


def _check_xi(model: LssModel, xi):
    xi = np.asarray(xi, dtype=float)
    if not model.base.in_mgf_domain(2 * xi):
        raise DomainError(f"shape {xi!r}: MGF of {model.base.name} undefined at 2*xi")
    return xi


def shape_profile(model: LssModel, xi: float) -> ShapeProfile:
    """Mean and standard deviation of the standardised member, their shape
    derivatives, and the warping coefficient ``psi``."""
    xi = float(_check_xi(model, xi))
    return ShapeProfile(xi, *(float(v) for v in _profile_arrays(model, xi)))


def psi(model: LssModel, xi):
    """Vectorised warping coefficient."""
    xi = _check_xi(model, xi)
    return _profile_arrays(model, xi)[4]


def wim_theta(model: LssModel, theta) -> Metric3:
    """Closed-form information matrix in ``(mu, sigma, xi)``."""
    theta = model.check(theta)
    sigma, xi = theta.sigma, float(_check_xi(model, theta.xi))
    base = model.base
    i12 = _mgf.MEAN(base, xi)
    i13 = sigma * _mgf.MEAN_D(base, xi)
    i22 = _mgf.SECOND(base, xi)
    i23 = sigma * _mgf.SECOND_HALF_D(base, xi)
    i33 = sigma**2 * _mgf.SHAPE_SHAPE(base, xi)
    g = np.array([[1.0, i12, i13], [i12, i22, i23], [i13, i23, i33]])
    return Metric3(g, "theta")


def wim_numeric(model: LssModel, theta, spec: QuadratureSpec = DEFAULT_QUAD) -> Metric3:
    """Information matrix by quantile-domain quadrature of products of
    score derivatives."""
    theta = model.check(theta)
    _check_xi(model, theta.xi)
    g = np.empty((3, 3))

    def grads(x):
        return [score_dx(model, theta, i, x) for i in range(3)]

    for i in range(3):
        for j in range(i, 3):

            def fn(x, level, upper, i=i, j=j):
                d = grads(x)
                return d[i] * d[j]

            g[i, j] = g[j, i] = model.quantile_integral(theta, fn, spec).value
    return Metric3(g, "theta")


def theta_to_omega(model: LssModel, theta) -> OmegaParams:
    theta = model.check(theta)
    m, s, *_ = _profile_arrays(model, _check_xi(model, theta.xi))
    return OmegaParams(theta.mu + theta.sigma * float(m), theta.sigma * float(s), theta.xi)


def omega_to_theta(model: LssModel, omega: OmegaParams) -> ThetaParams:
    if not isinstance(omega, OmegaParams):
        omega = OmegaParams(*omega)
    m, s, *_ = _profile_arrays(model, _check_xi(model, omega.xi))
    m, s = float(m), float(s)
    return ThetaParams(omega.alpha - m / s * omega.beta, omega.beta / s, omega.xi)


def jacobian_omega(model: LssModel, omega: OmegaParams) -> np.ndarray:
    """``d theta / d omega`` at ``omega``."""
    if not isinstance(omega, OmegaParams):
        omega = OmegaParams(*omega)
    m, s, m_p, s_p, _ = (float(v) for v in _profile_arrays(model, _check_xi(model, omega.xi)))
    beta = omega.beta
    # mu = alpha - beta m/s, sigma = beta/s
    return np.array(
        [
            [1.0, -m / s, -beta * (m_p * s - m * s_p) / s**2],
            [0.0, 1.0 / s, -beta * s_p / s**2],
            [0.0, 0.0, 1.0],
        ]
    )


def wim_omega(model: LssModel, omega: OmegaParams) -> Metric3:
    """``diag(1, 1, beta^2 psi(xi))``."""
    if not isinstance(omega, OmegaParams):
        omega = OmegaParams(*omega)
    ps = float(psi(model, omega.xi))
    return Metric3(np.diag([1.0, 1.0, omega.beta**2 * ps]), "omega")
