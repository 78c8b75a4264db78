"""Wasserstein geometry of location-scale-shape families (GEV, GPD and custom)."""

from .base_density import BaseDensity, SupportInterval, custom, exponential, gumbel
from .errors import ChartError, DomainError, FitError, LssError, NonConvergence, ValidationError
from .geodesics import (
    FlatChart,
    FlatPoint,
    MembershipResult,
    PathSample,
    default_u_grid,
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
    w2_quantiles,
)
from .metric import (
    Metric3,
    OmegaParams,
    ShapeProfile,
    jacobian_omega,
    omega_to_theta,
    psi,
    shape_profile,
    theta_to_omega,
    wim_numeric,
    wim_omega,
    wim_theta,
)
from .model import LssModel, ThetaParams, gev, gpd
from .numerics import DiffSpec, Estimate, QuadratureSpec, derivative, integrate
from .scores import INDICES, continuity_residual, score, score_dx, score_numeric

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
