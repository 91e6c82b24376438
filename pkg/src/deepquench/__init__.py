"""Deep-quench optimal control of a relaxed Cahn-Hilliard tumor-growth model.

The package solves the logarithmically regularized state system and its
double-obstacle limit on uniform cell-centered grids, computes exact
discrete adjoint gradients of tracking costs, and drives projected-gradient
optimization through a sequence of vanishing quench parameters.
"""

from deepquench.mesh import (
    Grid,
    TimeGrid,
    conjugate_gradient,
    h1_norm,
    inner_l2,
    inner_l2_time,
    integrate_space,
    laplacian_neumann,
)
from deepquench.potentials import PiSpec, ProliferationSpec, QuenchWeight
from deepquench.model import (
    Control,
    ControlBounds,
    ModelParams,
    TrackingTargets,
)
from deepquench.initdata import InitialData, make_initial_data
from deepquench.forward import (
    StateTrajectory,
    mass_balance_residual,
    ode_oracle,
    solve_state_gamma,
    solve_state_obstacle,
    step_gamma,
)
from deepquench.adjoint import (
    AdjointTrajectory,
    compute_lambda,
    slackness_diagnostics,
    solve_adjoint,
    solve_linearized,
)
from deepquench.control import (
    OptimizerOptions,
    QuenchReport,
    QuenchSchedule,
    deep_quench,
    eval_adapted_cost,
    eval_cost,
    project_control,
    projected_gradient,
    reduced_cost,
    reduced_gradient,
    stationarity_residual,
)

__version__ = "0.1.0"
