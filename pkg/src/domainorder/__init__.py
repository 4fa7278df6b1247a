"""Training-order analysis for multi-domain learning via Lie brackets of
gradient flows: schedules, flows, brackets, excess-loss predictions and the
experiment harness built on them."""

from .commutator import (
    CALIBRATED_COEFFICIENT,
    BracketResult,
    ExcessLossReport,
    OptimalityViolation,
    lie_bracket_R,
    measure_excess_loss,
    optimality_scan,
    p_value,
    predict_excess_loss,
    quadratic_R_closed_form,
    recommended_intervention,
)
from .domain import (
    CombinedDomain,
    HvpConfig,
    MlpDomain,
    QuadraticDomain,
    combine_domains,
    eval_loss_grad,
    gen_synthetic_datasets,
    hvp,
    make_mlp_domain,
    make_quadratic_domain,
    quadratic_closed_flow,
)
from .errors import ArgumentError, NumericError, UnsupportedModeError
from .flow import (
    GdConfig,
    IntegratorConfig,
    QuadraticFlowEngine,
    Trajectory,
    discrete_gd,
    flow_map_numeric,
    integrate_ode,
)
from .linalg import Prng, mat_exp_sym, random_orthogonal, sym_eigh
from .schedule import (
    InterventionSpec,
    WeightSchedule,
    constant_schedule,
    piecewise_schedule,
    swap_intervention,
    total_data,
    validate_schedule,
    weights_at,
)

__version__ = "0.1.0"
