"""Solver for optimal investment and consumption under a habit-formation
constraint in a Black-Scholes market."""

from .params import ModelParams, DerivedConstants, derive_constants, validate
from .ode import OdeControls, Trajectory, Termination, integrate_decreasing
from .fbp import (
    ExitKind,
    FbpSolution,
    ShootingOutcome,
    boundary_H,
    rhs_phi_H,
    shoot,
    solve_free_boundary,
)
from .dual import DualSolution
from .policy import DualInverse, PolicySolution, build_policy, invert_dual
from .simulate import (
    McEstimate,
    PolicyTable,
    SimConfig,
    SimPath,
    drift_diffusion,
    mc_value,
    path_rng,
    reconstruct_wealth,
    simulate_path,
    tail_bound,
)
from .verify import CheckResult, certificate_suite, corrupted_policy
from .errors import (
    DomainError,
    NoCrossingError,
    NoSignChangeError,
    SolverError,
    TailUnderflowError,
    UsageError,
    ValidationError,
)

__version__ = "0.1.0"


def solve(params: ModelParams, controls: OdeControls | None = None,
          eta_tol: float = 1e-12) -> PolicySolution:
    """One-call pipeline: constants -> free boundary -> dual -> policy."""
    consts = derive_constants(params)
    fbp = solve_free_boundary(consts, controls, eta_tol=eta_tol)
    return build_policy(DualSolution(fbp=fbp, consts=consts))


BASE_PARAMS = ModelParams(r=0.02, mu=0.12, sigma=0.2, rho=1.0, alpha=0.75,
                          delta=0.3, gamma=2.0)
