"""Layered set-based MPC for tracking with the maximal domain of attraction."""
from .controllers import (
    ControllerConfig,
    ControlStep,
    Flavor,
    LayeredMPC,
    TrackingMPC,
    build_layered_qp,
    build_tracking_qp,
    distance_to_set,
    kappa_mpc,
)
from .exceptions import (
    ControllerFailure,
    DimensionMismatch,
    EmptySet,
    NumericalFailure,
    OutsideDomain,
    SetpointNotEquilibrium,
)
from .lp import LpProblem, LpSolution, LpStatus, solve_lp
from .polytope import Polytope
from .qp import QpProblem, QpSolution, QpStatus, solve_qp, verify_kkt
from .reachability import (
    LinearSystem,
    Mode,
    SetLadder,
    build_ladder,
    check_contractive,
    controllable_set,
    equilibrium_set,
    input_set,
    layer_of,
    one_step_set,
)
from .simulator import Scenario, Trajectory, compare, performance_index, sample_domain, simulate

__version__ = "0.1.0"
