"""Empirical center-outward distribution and quantile functions via optimal transport."""

from .errors import (
    CenterOutError,
    ConfigError,
    ConvergenceFailure,
    InvalidArgument,
    NumericError,
    OutOfDomain,
    ParseError,
    Unsupported,
    UnsupportedPlanKind,
)
from .reference import (
    ReferenceConstants,
    SphericalGrid,
    ball_volume,
    build_grid,
    coarea_radial_integral,
    sample_spherical_uniform,
    sphere_area,
    spherical_uniform_density,
)
from .ot import Dataset, TransportPlan, solve_assignment, solve_sinkhorn, verify_cyclical_monotonicity

from .potential import (
    DiscretePotential,
    ExtendedPotential,
    F_pm,
    Q_pm,
    build_potentials,
    check_inverse,
    legendre_transform,
    lipschitz_audit,
)
from .monge_ampere import (
    AnalyticPotential,
    MAEstimate,
    boundary_avoidance_check,
    check_bounds_lemma,
    ma_backward_density,
    ma_forward_density,
)
from .quantiles import (
    QuantileContour,
    RankSignTable,
    asymptotic_invariance_test,
    contour,
    hausdorff_distance,
    homeomorphism_audit,
    rank_sign_independence_test,
    ranks_signs,
    ray_escape_test,
    support_recovery_test,
)
from .generators import GeneratorSpec, make_generator

__version__ = "0.1.0"
