"""Variational integrators for nonautonomous nonholonomic Lagrangian systems
with energy-determined time steps."""

from .calculus import (
    CovectorExt,
    action_sum,
    d_del,
    energy_minus,
    energy_plus,
    omega_two_form,
    theta_minus,
    theta_plus,
    two_form_matrix,
)
from .core import (
    ConstraintSet,
    DiscreteLagrangian,
    ExtendedPair,
    ExtendedPoint,
    GroupActionSpec,
    NonholonomicSystem,
    SectionSpec,
    SolverConfig,
    Trajectory,
    time_translation_action,
    translation_action,
    validate_system,
)
from .discretize import ContinuousLagrangian, midpoint_constraints, midpoint_lagrangian
from .errors import *  # noqa: F401,F403
from .stepper import (
    edel_residual,
    edla_residual,
    make_admissible,
    newton_solve,
    simulate,
    step_edel,
    step_edla,
)

__version__ = "0.1.0"
