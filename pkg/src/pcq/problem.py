"""Reduced objective, adjoint gradient, box projection and first-order checks.

Controls, states and adjoints are nodal arrays on ``spec.mesh``.  All L2
pairings use the lumped mass matrix, so the nodal gradient ``d = phi + nu u``
is the exact Riesz representative of the discrete derivative and the
nodewise clamp is the exact L2 projection onto the box.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np

from .coefficient import PC2Coefficient
from .exceptions import SolverError, ValidationError
from .mesh import Mesh, element_gradient, inner_l2, norms
from .solvers import Linearization, StateSolveConfig, solve_state

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class BoxBounds:
    """Nodal bounds ``alpha <= u <= beta`` with ``beta - alpha >= gamma``.

    Infinite entries mark an unconstrained side.
    """

    alpha: np.ndarray
    beta: np.ndarray
    gamma: float | None = None

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        beta = np.asarray(self.beta, dtype=float)
        if alpha.shape != beta.shape or alpha.ndim != 1:
            raise ValidationError("alpha and beta must be nodal arrays of equal length")
        if np.any(np.isnan(alpha)) or np.any(np.isnan(beta)) or np.any(alpha == np.inf) or np.any(beta == -np.inf):
            raise ValidationError("bounds must be numbers with alpha < inf and beta > -inf")
        gap = float(np.min(beta - alpha)) if alpha.size else np.inf
        gamma = (gap if np.isfinite(gap) else 1.0) if self.gamma is None else float(self.gamma)
        if not gamma > 0:
            raise ValidationError("bounds require beta - alpha >= gamma > 0")
        if gap < gamma:
            raise ValidationError(f"beta - alpha = {gap:.3g} falls below gamma = {gamma:.3g}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", gamma)

    @classmethod
    def constant(cls, mesh, alpha, beta):
        return cls(mesh.constant(alpha), mesh.constant(beta))

    def project(self, v):
        return np.minimum(np.maximum(v, self.alpha), self.beta)

    def contains(self, v, tol=0.0):
        return bool(np.all(v >= self.alpha - tol) and np.all(v <= self.beta + tol))


def project_box(bounds, v):
    """Nodewise median of ``alpha``, ``v`` and ``beta``."""
    return bounds.project(np.asarray(v, dtype=float))


# -- objectives -----------------------------------------------------------------


class Objective:
    """Interface of a C2 state objective ``G``.

    Subclasses provide ``value``, ``gradient`` (nodal field whose lumped-mass
    load is ``G'(y)``) and ``hessian`` (bilinear action).  ``taylor_term``
    returns ``int_0^1 (1-s) G''(y0 + s(y1-y0))(y1-y0)^2 ds`` and falls back to
    16-point Gauss-Legendre quadrature in ``s``.
    """

    def value(self, mesh, y):
        raise NotImplementedError

    def gradient(self, mesh, y):
        raise NotImplementedError

    def hessian(self, mesh, y, z1, z2):
        raise NotImplementedError

    def taylor_term(self, mesh, y0, y1):
        x, w = np.polynomial.legendre.leggauss(16)
        s, w = 0.5 * (x + 1), 0.5 * w
        dy = y1 - y0
        return float(sum(wk * (1 - sk) * self.hessian(mesh, y0 + sk * dy, dy, dy) for sk, wk in zip(s, w)))


@dataclass(eq=False)
class TrackingObjective(Objective):
    """``G(y) = 1/2 ||y - y_d||^2``."""

    y_d: np.ndarray

    def value(self, mesh, y):
        r = y - self.y_d
        return 0.5 * inner_l2(mesh, r, r)

    def gradient(self, mesh, y):
        return y - self.y_d

    def hessian(self, mesh, y, z1, z2):
        return inner_l2(mesh, z1, z2)

    def taylor_term(self, mesh, y0, y1):
        dy = y1 - y0
        return 0.5 * inner_l2(mesh, dy, dy)


# -- problem data ---------------------------------------------------------------


@dataclass(eq=False)
class ProblemSpec:
    mesh: Mesh
    b: np.ndarray
    coefficient: PC2Coefficient
    nu: float
    bounds: BoxBounds
    objective: Objective
    state_cfg: StateSolveConfig = field(default_factory=lambda: StateSolveConfig(tol=1e-12))

    def __post_init__(self):
        mesh = self.mesh
        self.b = mesh.check(self.b, "b")
        if not np.all(np.isfinite(self.b)) or self.b.min() <= 0:
            raise ValidationError("b must be finite with a positive floor")
        if not (np.isfinite(self.nu) and self.nu > 0):
            raise ValidationError("nu must be positive")
        self.nu = float(self.nu)
        mesh.check(self.bounds.alpha, "alpha")
        if isinstance(self.objective, TrackingObjective):
            self.objective.y_d = mesh.check(self.objective.y_d, "y_d")

    @property
    def b_floor(self):
        return float(self.b.min())

    @cached_property
    def b_lipschitz(self):
        """Largest element gradient of b (Lipschitz estimate)."""
        return float(np.max(np.linalg.norm(element_gradient(self.mesh, self.b), axis=1)))

    def with_target(self, y_d):
        return ProblemSpec(self.mesh, self.b, self.coefficient, self.nu, self.bounds,
                           TrackingObjective(y_d), self.state_cfg)


def state_of(spec, u, y0=None):
    """``S(u)``; raises :class:`SolverError` when the state solver stalls."""
    y, report = solve_state(spec, u, spec.state_cfg, y0=y0)
    if not report.converged:
        raise SolverError(
            f"state solver did not converge after {report.iterations} iterations "
            f"(increment {report.increment:.3e})",
            report,
        )
    return y


def objective(spec, u, y=None):
    """``j(u) = G(S(u)) + nu/2 ||u||^2``; pass ``y`` to skip the state solve."""
    y = state_of(spec, u) if y is None else y
    return spec.objective.value(spec.mesh, y) + 0.5 * spec.nu * inner_l2(spec.mesh, u, u)


def adjoint_state(spec, u, y=None):
    y = state_of(spec, u) if y is None else y
    phi = Linearization(spec, y).solve_adjoint(spec.objective.gradient(spec.mesh, y))
    return y, phi


def gradient_field(spec, u, y=None):
    """Reduced gradient ``d = phi_u + nu u`` as a nodal field."""
    _, phi = adjoint_state(spec, u, y)
    return phi + spec.nu * u


def foc_residual(spec, u, d=None):
    """``||u - P(u - d)||`` in L2; zero exactly at discrete stationary points."""
    d = gradient_field(spec, u) if d is None else d
    return norms(spec.mesh, u - project_box(spec.bounds, u - d))[0]


def pontryagin_gap(spec, u, phi=None):
    """Largest nodal excess of ``nu/2 u^2 + phi u`` over its minimum on the box.

    The state-dependent part of the Hamiltonian is the same on both sides
    and cancels.  The inner minimizer is ``clamp(-phi/nu)``.
    """
    if phi is None:
        _, phi = adjoint_state(spec, u)
    nu = spec.nu
    s = project_box(spec.bounds, -phi / nu)
    H = lambda v: 0.5 * nu * v**2 + phi * v  # noqa: E731
    return float(max(0.0, np.max(H(u) - H(s))))


# -- projected gradient -----------------------------------------------------------


@dataclass
class OptimizeConfig:
    tol: float = 1e-8
    max_iter: int = 500
    step0: float | None = None  # defaults to 1/nu
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 40

    def __post_init__(self):
        if not self.tol > 0:
            raise ValidationError("tol must be positive")
        if int(self.max_iter) < 0:
            raise ValidationError("max_iter must be >= 0")
        if not 0 < self.backtrack < 1:
            raise ValidationError("backtrack factor must lie in (0, 1)")
        if not 0 < self.armijo < 1:
            raise ValidationError("armijo constant must lie in (0, 1)")


@dataclass
class OptimizeReport:
    iterations: int = 0
    objective_trace: list = field(default_factory=list)
    foc_residual: float = float("inf")
    step_trace: list = field(default_factory=list)
    foc_trace: list = field(default_factory=list)
    converged: bool = False
    status: str = "not started"

    def to_dict(self):
        return asdict(self)

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), sort_keys=True, **kw)


def projected_gradient(spec, u0, cfg=None):
    """Projected gradient descent with Armijo backtracking.

    The trial step is ``cfg.step0`` (``1/nu`` by default) at every iteration.
    A step ``tau`` is accepted when
    ``j(u+) <= j(u) - armijo * tau * <d, u - u+>``.
    Returns the final iterate and an :class:`OptimizeReport`.
    """
    cfg = cfg or OptimizeConfig()
    mesh = spec.mesh
    step0 = 1.0 / spec.nu if cfg.step0 is None else float(cfg.step0)
    u = project_box(spec.bounds, mesh.check(u0, "u0"))
    y = state_of(spec, u)
    J = objective(spec, u, y)
    d = gradient_field(spec, u, y)
    report = OptimizeReport(objective_trace=[J])
    report.foc_residual = foc_residual(spec, u, d)
    report.foc_trace.append(report.foc_residual)
    if report.foc_residual <= cfg.tol:
        report.converged, report.status = True, "converged"
        return u, report

    for k in range(int(cfg.max_iter)):
        tau = step0
        for _ in range(int(cfg.max_backtracks) + 1):
            u_new = project_box(spec.bounds, u - tau * d)
            y_new = state_of(spec, u_new, y0=y)
            J_new = objective(spec, u_new, y_new)
            decrease = inner_l2(mesh, d, u - u_new)
            if J_new <= J - cfg.armijo * tau * decrease:
                break
            tau *= cfg.backtrack
        else:
            report.status = "line search failed"
            log.warning("line search failed at iteration %d", k)
            break
        u, y, J = u_new, y_new, J_new
        d = gradient_field(spec, u, y)
        report.iterations = k + 1
        report.objective_trace.append(J)
        report.step_trace.append(tau)
        report.foc_residual = foc_residual(spec, u, d)
        report.foc_trace.append(report.foc_residual)
        log.debug("pg it=%d j=%.12e foc=%.3e step=%.3g", k + 1, J, report.foc_residual, tau)
        if report.foc_residual <= cfg.tol:
            report.converged, report.status = True, "converged"
            break
    else:
        report.status = f"maximum iterations ({cfg.max_iter}) reached"
    return u, report
