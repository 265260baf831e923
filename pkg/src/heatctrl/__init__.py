"""Time-optimal bang-bang control of coupled heat systems, at desk scale.

The package computes, synthesizes and verifies time-optimal controls for
systems of heat equations coupled by a constant matrix pair ``(A, B)`` on an
interval, via exact spectral truncation.  It exposes:

- structural matrix algebra (``linalg``): controllability ranks, the
  decomposition into controllable/uncontrollable blocks, and the window
  length ``d_A`` / per-column rank ``q_{A,B}``;
- the truncated model (``spectral``): semigroup, observation map, forward
  solves;
- the steering engine (``steering``): minimal-norm duals, the
  norm-vs-horizon map and the optimal-time bisection with bang-bang
  synthesis;
- switching analysis (``switching``): observation zeros, vanishing orders,
  direction reversal and the window/count bounds;
- an independent ODE shooting oracle (``oracle``);
- a batch runner with a JSON scenario format (``runner`` / ``cli``).
"""

from .errors import (
    ConvergenceError,
    DegenerateMultiplierError,
    FeasibilityError,
    HeatCtrlError,
    HorizonError,
    OrderMismatchError,
    ScenarioSchemaError,
)
from .linalg import (
    ControlPair,
    KalmanDecomposition,
    compute_dA,
    compute_qAB,
    controllability_matrix,
    kalman_decompose,
    kalman_rank,
    mat_exp,
    sampled_kalman_rank,
)
from .oracle import (
    ClosedFormControl,
    OdeInstance,
    OracleResult,
    example_closed_form,
    ode_min_norm,
    ode_time_optimal,
)
from .spectral import (
    ControlTrajectory,
    SpectralDomain,
    SpectralVector,
    build_domain,
    observation,
    semigroup_apply,
    solve_forward,
)
from .steering import (
    OptimalTimeResult,
    SteeringOptions,
    SteeringResult,
    batch_options,
    dual_functional,
    feasibility_check,
    min_norm,
    optimal_time,
    synthesize_control,
)
from .switching import (
    BoundCheck,
    SwitchReport,
    detect_switches,
    find_zero_times,
    vanishing_order,
    verify_bounds,
)

__version__ = "0.1.0"

__all__ = [
    "ControlPair",
    "KalmanDecomposition",
    "mat_exp",
    "kalman_rank",
    "compute_dA",
    "compute_qAB",
    "kalman_decompose",
    "sampled_kalman_rank",
    "controllability_matrix",
    "SpectralDomain",
    "SpectralVector",
    "ControlTrajectory",
    "build_domain",
    "semigroup_apply",
    "observation",
    "solve_forward",
    "SteeringOptions",
    "SteeringResult",
    "OptimalTimeResult",
    "dual_functional",
    "min_norm",
    "optimal_time",
    "synthesize_control",
    "feasibility_check",
    "batch_options",
    "SwitchReport",
    "BoundCheck",
    "find_zero_times",
    "vanishing_order",
    "detect_switches",
    "verify_bounds",
    "OdeInstance",
    "OracleResult",
    "ClosedFormControl",
    "ode_time_optimal",
    "ode_min_norm",
    "example_closed_form",
    "HeatCtrlError",
    "FeasibilityError",
    "ConvergenceError",
    "HorizonError",
    "DegenerateMultiplierError",
    "OrderMismatchError",
    "ScenarioSchemaError",
    "__version__",
]
