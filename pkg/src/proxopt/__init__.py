"""Gradient projection finalised by a modified Newton method for smooth
minimisation over proximally smooth level sets ``{x : g(x) = 0}``."""

from .combined import (
    ConstantsLedger,
    ProblemHints,
    SolveResult,
    compute_switch_constant,
    estimate_ledger,
    run_combined,
)
from .diagnostics import (
    FrameOrbitSet,
    StationarySet,
    fd_consistency,
    inverse_bound_check,
    nondegeneracy_check,
    sphere_quadratic_constants,
    sphere_quadratic_mu,
    stationary_points_sphere_quadratic,
    stationary_set_stiefel_quadratic,
    verify_geb,
    verify_teb,
)
from .errors import *  # noqa: F401,F403
from .gpa import GpaConfig, gpa_step, gradient_mapping, n1_bound, run_gpa, step_size_bounds
from .kkt import (
    KktPoint,
    ObjectiveMap,
    eval_F,
    eval_F_prime,
    lambda_x,
    quadratic_form,
    stationarity_residual,
    trace_form,
)
from .manifold import (
    ConstraintMap,
    project_levelset,
    project_sphere,
    project_stiefel,
    sphere,
    stiefel,
    tangent_project,
    tangent_projector,
    tube_membership,
)
from .newton import BasinCertificate, FrozenJacobian, basin_check, modified_newton_step, n2_bound, run_newton
from .problems import sphere_quadratic, stiefel_quadratic
from .trace import IterationTrace, TraceRow

__version__ = "0.1.0"
