"""scikit-learn style wrappers around the functional core.

``ControlToState`` is a transformer mapping rows of nodal controls to rows
of nodal states.  ``OptimalControl`` fits a control to a target state and
predicts the optimal state.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .mesh import build_mesh
from .problem import (
    BoxBounds,
    OptimizeConfig,
    ProblemSpec,
    TrackingObjective,
    adjoint_state,
    foc_residual,
    objective,
    projected_gradient,
    state_of,
)
from .solvers import StateSolveConfig
from .validation import check_coefficient, check_extents, check_fields, check_positive


class _ProblemMixin:
    def _build(self, nu=1.0, alpha=-np.inf, beta=np.inf, y_d=None):
        mesh = build_mesh(self.dim, check_extents(self.dim, self.extents), self.resolution)
        b = mesh.constant(check_positive(self.b, "b")) if np.isscalar(self.b) else mesh.check(self.b, "b")
        bounds = BoxBounds.constant(mesh, alpha, beta)
        y_d = mesh.constant(0.0) if y_d is None else y_d
        cfg = StateSolveConfig(tol=self.state_tol, method=self.method)
        return ProblemSpec(mesh, b, check_coefficient(self.coefficient), nu, bounds,
                           TrackingObjective(y_d), cfg)


class ControlToState(_ProblemMixin, TransformerMixin, BaseEstimator):
    """Control-to-state map ``u -> S(u)`` of the quasilinear state equation.

    Parameters
    ----------
    dim, extents, resolution : mesh description
    b : float or nodal array, diffusion floor field
    coefficient : PC2Coefficient or dict, nonsmooth part ``a``
    state_tol : float, H1 increment tolerance of the state solver
    method : {"picard", "kirchhoff"}
    """

    def __init__(self, dim=1, extents=(0.0, 1.0), resolution=64, b=1.0, coefficient=None,
                 state_tol=1e-12, method="picard"):
        self.dim = dim
        self.extents = extents
        self.resolution = resolution
        self.b = b
        self.coefficient = coefficient
        self.state_tol = state_tol
        self.method = method

    def fit(self, X=None, y=None):
        self.spec_ = self._build()
        self.n_features_in_ = self.spec_.mesh.n_nodes
        if X is not None:
            check_fields(X, self.n_features_in_)
        return self

    def transform(self, X):
        check_is_fitted(self, "spec_")
        X = check_fields(X, self.n_features_in_)
        return np.vstack([state_of(self.spec_, u) for u in X])


class OptimalControl(_ProblemMixin, BaseEstimator):
    """Box-constrained tracking control fitted by projected gradient.

    ``fit(X)`` takes the target state (one nodal row, or ``None`` for the
    zero target).  After fitting, ``u_``, ``y_``, ``phi_``, ``report_`` and
    ``foc_residual_`` are available; ``predict`` returns the optimal state
    and ``score`` the negated optimal objective.
    """

    def __init__(self, dim=1, extents=(0.0, 1.0), resolution=64, b=1.0, coefficient=None,
                 nu=1e-2, alpha=-np.inf, beta=np.inf, tol=1e-8, max_iter=500,
                 state_tol=1e-12, method="picard"):
        self.dim = dim
        self.extents = extents
        self.resolution = resolution
        self.b = b
        self.coefficient = coefficient
        self.nu = nu
        self.alpha = alpha
        self.beta = beta
        self.tol = tol
        self.max_iter = max_iter
        self.state_tol = state_tol
        self.method = method

    def _target(self, X, mesh):
        if X is None:
            return mesh.constant(0.0)
        X = check_fields(X, mesh.n_nodes)
        if X.shape[0] != 1:
            raise ValueError("OptimalControl expects a single target row")
        return X[0]

    def fit(self, X=None, y=None, u0=None):
        spec = self._build(check_positive(self.nu, "nu"), self.alpha, self.beta)
        spec.objective = TrackingObjective(self._target(X, spec.mesh))
        u0 = spec.mesh.constant(0.0) if u0 is None else u0
        u, report = projected_gradient(spec, u0, OptimizeConfig(tol=self.tol, max_iter=self.max_iter))
        self.spec_ = spec
        self.n_features_in_ = spec.mesh.n_nodes
        self.u_, self.report_ = u, report
        self.y_, self.phi_ = adjoint_state(spec, u)
        self.foc_residual_ = foc_residual(spec, u, self.phi_ + spec.nu * u)
        self.objective_ = objective(spec, u, self.y_)
        return self

    def predict(self, X=None):
        check_is_fitted(self, "u_")
        return self.y_.copy()

    def score(self, X=None, y=None):
        check_is_fitted(self, "u_")
        if X is None:
            return -self.objective_
        spec = self.spec_.with_target(self._target(X, self.spec_.mesh))
        return -objective(spec, self.u_, self.y_)
