"""Monotone solvers for nonlocal elliptic equations with exterior Neumann and oblique conditions.

The exterior condition ``gamma.Du = g`` is imposed on the whole complement
of the domain, either through a penalty ``(1/kappa) dtilde (gamma.Du - g)``
driven to zero by continuation, or directly by transporting boundary values
along the flow of ``-gamma``. A Monte Carlo estimator of the underlying
reflected jump process serves as an independent check.
"""

from .config import RunConfig, load_config, parse_config
from .errors import (ClosureRequired, ConfigError, CornerPoint, DeltaTooLarge, HorizonTooShort,
                     MonotonicityViolation, NLNeumannError, NoConvergence, NoHit, NonIntegrable,
                     NotConvex, NoTouchingPoint, StepTooLarge, StiffPenalty, ValidationError)
from .flow import (FlowResult, ObliqueField, check_field, extension_data, integrate_flow,
                   integrate_flow_batch, project, theta_time, transport_extension)
from .geometry import (Ball, Box, ConvexPolygon, Domain, HalfSpace, ImplicitSDF, Interval, closest_point,
                       dist_to_closure, enumerate_normal_cone, normal, normal_cone, signed_distance,
                       truncated_distance)
from .grid import Grid
from .levy import (ClampClosure, ExtensionClosure, FunctionClosure, LevyModel, QuadratureTable,
                   apply_nonlocal, apply_nonlocal_all, build_quadrature, check_exterior_integrability,
                   default_c_alpha, far_operator)
from .mc_oracle import JumpProcessConfig, simulate_value
from .nonlinearity import Linear, Nonlinearity, compute_MF, evaluate, verify_assumptions
from .solver import (Discretization, Problem, Solution, SolverConfig, continuation_in_kappa,
                     definition_semantics_probe, discretize_residual, fill_exterior, observed_orders,
                     solve, solve_direct, solve_fixed_point)

__version__ = "0.1.0"
