"""Grid solver and verification harness for a w-eta-theta phase-field system
of planar grain boundary motion: per time step, a contraction fixed-point
solve for the order parameters followed by a weighted-total-variation convex
minimization for the orientation angle, for every interface parameter nu >= 0.
"""

from .energy import EnergyBreakdown, free_energy, phi_nu
from .grid import (
    GridSpec,
    PhaseState,
    ScalarField,
    VectorField,
    dirichlet_energy,
    divergence,
    grad_operator_norm_bound,
    gradient,
    neumann_laplacian,
    truncate,
    weighted_dirichlet_energy,
    weighted_tv,
)
from .model import (
    MobilityKind,
    MobilitySpec,
    ModelSpec,
    Potential,
    PotentialSpec,
    ValidationReport,
    check_a4,
    estimate_c2_norm,
    estimate_c_star,
    g_eval,
    gamma_eval,
    gamma_prox,
    grad_g,
    mobility_eval,
)
from .scheme import (
    HGateError,
    Interpolant,
    SchemeParams,
    StepReport,
    Trajectory,
    h_star,
    run,
    time_interpolate,
    validate_initial,
)
from .thetastep import (
    ThetaNoConvergence,
    ThetaStepParams,
    ThetaStepReport,
    oracle_theta_min,
    theta_step,
    theta_step_smoothed,
    tmonotonicity_check,
)
from .verify import (
    CheckResult,
    StudyReport,
    check_box,
    check_dissipation,
    check_energy_bound,
    check_gamma_sandwich,
    check_linfty,
    check_theta_oracle,
    nu_limit_study,
    random_grains_field,
    random_smooth_field,
)
from .vstep import (
    InnerNoConvergence,
    OuterNoConvergence,
    SolverError,
    VStepParams,
    VStepReport,
    v_step,
    v_step_perturbation_bound,
)

__version__ = "0.1.0"
