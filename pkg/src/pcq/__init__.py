"""Optimal control of quasilinear elliptic equations with a nonsmooth coefficient."""

from .coefficient import PC2Coefficient, PolynomialPiece
from .estimators import ControlToState, OptimalControl
from .exceptions import (
    ConfigError,
    NotStationaryError,
    PCQError,
    SingularSystemError,
    SolverError,
    ValidationError,
)
from .mesh import Mesh, SparseOperator, assemble_operator, build_mesh, element_gradient, inner_l2, norms, solve_dirichlet
from .problem import (
    BoxBounds,
    OptimizeConfig,
    OptimizeReport,
    ProblemSpec,
    TrackingObjective,
    foc_residual,
    gradient_field,
    objective,
    pontryagin_gap,
    project_box,
    projected_gradient,
    state_of,
)
from .second_order import (
    CurvatureReport,
    SOCConfig,
    StationaryTriple,
    Q_one,
    Q_smooth,
    Q_tilde,
    Q_two,
    critical_cone_project,
    sigma_functional,
    soc_report,
    taylor_residual,
    zeta_terms,
)
from .solvers import (
    SolveReport,
    StateSolveConfig,
    kirchhoff_inverse,
    kirchhoff_value,
    solve_adjoint,
    solve_linearized,
    solve_state_kirchhoff,
    solve_state_picard,
)

__version__ = "0.1.0"
