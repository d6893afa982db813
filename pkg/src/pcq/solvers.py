"""State, linearized and adjoint solvers for -div[(b + a(y)) grad y] = u.

Every solver takes a problem object exposing ``mesh``, ``b`` (nodal
values) and ``coefficient`` (:class:`~pcq.coefficient.PC2Coefficient`).
The discrete state equation is the P1 system ``A(y) y = M u`` where ``A(y)``
uses ``b + a(y)`` evaluated at quadrature points and ``M`` is the lumped
mass matrix.  The linearized operator is the exact Jacobian of that system
away from breakpoints, and the adjoint operator is its matrix transpose.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np

from .exceptions import ValidationError
from .mesh import (
    assemble_operator,
    dual_norm,
    element_gradient,
    h1_norm,
    solve_dirichlet,
)

log = logging.getLogger(__name__)


@dataclass
class StateSolveConfig:
    tol: float = 1e-10
    max_iter: int = 200
    damping: float = 1.0
    method: str = "picard"
    # "defect": theta update driven by the shared P1 residual;
    # "transformed": theta solves the P1 Poisson problem of the transformed equation
    kirchhoff_variant: str = "defect"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValidationError("tol must be positive")
        if int(self.max_iter) < 1:
            raise ValidationError("max_iter must be >= 1")
        if not 0 < self.damping <= 1:
            raise ValidationError("damping must lie in (0, 1]")
        if self.method not in ("picard", "kirchhoff"):
            raise ValidationError(f"unknown state solver {self.method!r}")
        if self.kirchhoff_variant not in ("defect", "transformed"):
            raise ValidationError(f"unknown Kirchhoff variant {self.kirchhoff_variant!r}")


@dataclass
class SolveReport:
    method: str
    iterations: int = 0
    increment: float = float("inf")
    residual: float = float("inf")
    converged: bool = False
    increments: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


# -- Kirchhoff transform ------------------------------------------------------


def kirchhoff_value(coefficient, b, t):
    """``K(x, t) = b(x) t + int_0^t a``, with ``b`` the value(s) of b at x."""
    return np.asarray(b) * np.asarray(t) + coefficient.antiderivative(t)


def kirchhoff_inverse(coefficient, b, s, rtol=1e-12, max_iter=200):
    """Solve ``K(x, t) = s`` for ``t`` by safeguarded Newton-bisection.

    Works elementwise on arrays.  The slope ``b + a(t)`` is bounded below by
    the floor of b wherever a is non-negative, which keeps the Newton steps
    finite; steps leaving the current bracket are replaced by bisection.
    """
    s = np.asarray(s, dtype=float)
    b = np.broadcast_to(np.asarray(b, dtype=float), s.shape)
    scalar = s.ndim == 0
    s, b = np.atleast_1d(s).copy(), np.atleast_1d(b).copy()
    K = lambda t: b * t + coefficient.antiderivative(t)  # noqa: E731
    tol = rtol * np.maximum(1.0, np.abs(s))

    t = s / b
    lo = np.minimum(t, 0.0) - 1.0
    hi = np.maximum(t, 0.0) + 1.0
    for _ in range(200):
        bad = K(lo) > s
        if not bad.any():
            break
        lo[bad] -= 2 * (hi[bad] - lo[bad])
    for _ in range(200):
        bad = K(hi) < s
        if not bad.any():
            break
        hi[bad] += 2 * (hi[bad] - lo[bad])
    t = np.clip(t, lo, hi)

    for _ in range(max_iter):
        f = K(t) - s
        done = np.abs(f) <= tol
        if done.all():
            break
        hi = np.where(f > 0, t, hi)
        lo = np.where(f < 0, t, lo)
        slope = b + coefficient.eval(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = t - f / slope
        inside = (newton > lo) & (newton < hi) & np.isfinite(newton)
        t = np.where(done, t, np.where(inside, newton, 0.5 * (lo + hi)))
        # bracket collapsed to rounding level: accept
        stuck = (hi - lo) <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(t))
        if np.all(done | stuck):
            break
    return float(t[0]) if scalar else t


# -- state equation -------------------------------------------------------------


def _check_problem(problem):
    mesh = problem.mesh
    b = mesh.check(problem.b, "b")
    return mesh, b


def state_operator(problem, y):
    """``A(y)``: diffusion ``b + a(y)`` sampled at quadrature points."""
    mesh, b = _check_problem(problem)
    kappa = mesh.at_quad(b) + problem.coefficient.eval(mesh.at_quad(y))
    return assemble_operator(mesh, kappa)


def state_residual(problem, y, u):
    """Free-node residual ``A(y) y - M u``."""
    mesh = problem.mesh
    A = state_operator(problem, y)
    return A.matrix @ y[mesh.free] - (mesh.lumped_mass * mesh.check(u, "u"))[mesh.free]


def _finish(problem, y, u, report, cfg, scale):
    report.residual = dual_norm(problem.mesh, state_residual(problem, y, u))
    report.converged = report.increment <= cfg.tol * scale
    lo, hi = problem.coefficient.working_range
    if y.min() < lo or y.max() > hi:
        log.warning(
            "state range [%.3g, %.3g] leaves the coefficient working range [%.3g, %.3g]",
            y.min(), y.max(), lo, hi,
        )
    return y, report


def solve_state_picard(problem, u, cfg=None, y0=None):
    """Frozen-coefficient fixed point ``A(y_k) y_{k+1} = M u`` with damping."""
    cfg = cfg or StateSolveConfig()
    mesh = problem.mesh
    load = mesh.lumped_mass * mesh.check(u, "u")
    y = np.zeros(mesh.n_nodes) if y0 is None else mesh.check(y0, "y0").copy()
    omega = cfg.damping
    report = SolveReport("picard")
    scale = 1.0
    for k in range(1, int(cfg.max_iter) + 1):
        y_lin = solve_dirichlet(state_operator(problem, y), load)
        step = omega * (y_lin - y)
        inc = h1_norm(mesh, step)
        if report.increments and inc > report.increments[-1] and omega > 1 / 64:
            omega *= 0.5
        y = y + step
        report.iterations, report.increment = k, inc
        report.increments.append(inc)
        scale = max(1.0, h1_norm(mesh, y))
        log.debug("picard it=%d increment=%.3e damping=%.3g", k, inc, omega)
        if inc <= cfg.tol * scale:
            break
    return _finish(problem, y, u, report, cfg, scale)


def solve_state_kirchhoff(problem, u, cfg=None, y0=None):
    """Fixed point on the Kirchhoff variable ``theta = K(x, y)``.

    Each sweep solves a Poisson problem for ``theta`` and recovers ``y`` by
    pointwise inversion of ``K(x, .)``.  In the default ``"defect"`` variant
    the Poisson right-hand side is the residual of the shared P1 state
    system, so the fixed point is the same discrete state as the Picard
    solver; in 1D the first sweep from ``y = 0`` already equals the
    transformed-equation solution.
    """
    cfg = cfg or StateSolveConfig(method="kirchhoff")
    mesh, b = _check_problem(problem)
    coef = problem.coefficient
    load = mesh.lumped_mass * mesh.check(u, "u")
    lap = mesh._laplacian_lu
    free = mesh.free
    y = np.zeros(mesh.n_nodes) if y0 is None else mesh.check(y0, "y0").copy()
    theta = kirchhoff_value(coef, b, y)
    theta[mesh.boundary_mask] = 0.0
    if cfg.kirchhoff_variant == "transformed":
        grad_b = np.repeat(element_gradient(mesh, b)[:, None, :], mesh.quad_bary.shape[0], axis=1)
        W = assemble_operator(mesh, conv_div=grad_b).matrix
    omega = cfg.damping
    report = SolveReport("kirchhoff")
    scale = 1.0
    for k in range(1, int(cfg.max_iter) + 1):
        if cfg.kirchhoff_variant == "defect":
            r = load[free] - state_operator(problem, y).matrix @ y[free]
            target = theta[free] + lap.solve(r)
        else:
            target = lap.solve(load[free] + W @ y[free])
        theta_new = theta.copy()
        theta_new[free] = theta[free] + omega * (target - theta[free])
        y_new = np.zeros(mesh.n_nodes)
        y_new[free] = kirchhoff_inverse(coef, b[free], theta_new[free])
        inc = h1_norm(mesh, y_new - y)
        if report.increments and inc > report.increments[-1] and omega > 1 / 64:
            omega *= 0.5
        theta, y = theta_new, y_new
        report.iterations, report.increment = k, inc
        report.increments.append(inc)
        scale = max(1.0, h1_norm(mesh, y))
        log.debug("kirchhoff it=%d increment=%.3e", k, inc)
        if inc <= cfg.tol * scale:
            break
    return _finish(problem, y, u, report, cfg, scale)


def solve_state(problem, u, cfg=None, y0=None):
    cfg = cfg or StateSolveConfig()
    solver = solve_state_picard if cfg.method == "picard" else solve_state_kirchhoff
    return solver(problem, u, cfg, y0=y0)


# -- linearized and adjoint equations -------------------------------------------


class Linearization:
    """Linearized state operator at ``y``, factorized once.

    ``solve(v)`` returns ``S'(u) v``; ``solve_adjoint(g)`` solves the
    transposed system with load ``M g``.
    """

    def __init__(self, problem, y):
        mesh, b = _check_problem(problem)
        self.problem = problem
        self.mesh = mesh
        self.y = mesh.check(y, "y").copy()
        coef = problem.coefficient
        y_q = mesh.at_quad(self.y)
        self.y_quad = y_q
        self.grad_y = element_gradient(mesh, self.y)
        self.kappa = mesh.at_quad(b) + coef.eval(y_q)
        self.convection = coef.deriv_off_exceptional(y_q)[:, :, None] * self.grad_y[:, None, :]

    @cached_property
    def operator(self):
        return assemble_operator(self.mesh, self.kappa, conv_div=self.convection)

    def solve(self, v):
        return solve_dirichlet(self.operator, self.mesh.lumped_mass * self.mesh.check(v, "v"))

    def solve_adjoint(self, g):
        return solve_dirichlet(
            self.operator, self.mesh.lumped_mass * self.mesh.check(g, "g"), transpose=True
        )


def solve_linearized(problem, y_base, v):
    return Linearization(problem, y_base).solve(v)


def solve_adjoint(problem, y_base, g):
    return Linearization(problem, y_base).solve_adjoint(g)
