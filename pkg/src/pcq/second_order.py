"""Curvature functionals and second-order optimality checks.

At a stationary triple ``(u, y, phi)`` the generalized curvature of the
reduced objective in a direction ``h`` splits into

* ``Q_s``: the smooth part (objective Hessian, Tikhonov term and ``a''``),
* ``Q_1``: first-order nonsmooth part through the directional derivative
  of ``a``,
* ``Q_2``: second-order nonsmooth part, a limit of rescaled jump integrals
  over bands where the perturbed state crosses a breakpoint.

``Q_2`` is an infimum over vanishing step sequences; here it is replaced by
a minimum over a window of geometric sequences, and the band integrals are
computed exactly per cell.  ``sigma_functional`` measures gradient mass in
shrinking level bands around the breakpoints and bounds ``|Q_2|``.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import NotStationaryError, ValidationError
from .levelsets import band_measure, clipped_integrals
from .mesh import element_gradient, inner_l2, norms
from .problem import adjoint_state, foc_residual, objective, project_box, state_of
from .solvers import Linearization, solve_state

log = logging.getLogger(__name__)


def _default_r_values():
    return np.geomspace(1e-1, 1e-4, 24)


@dataclass
class SOCConfig:
    s0: float = 1e-1
    ratio: float = 0.5
    n_min: int = 3
    n_max: int = 14
    s0_offsets: tuple = (1.0, 2**-0.5, 0.5)
    r_values: np.ndarray = field(default_factory=_default_r_values)
    r_floor_factor: float = 4.0
    tau: float = 1e-6
    directions: int = 20
    seed: int = 0
    snc_tol: float = 1e-6
    foc_tol: float = 1e-6
    # zero grad(y) on cells whose nodal range straddles a breakpoint
    zero_straddling_gradient: bool = False
    # "exact" integrates the jump bands per cell; "quadrature" masks quadrature points
    zeta_integration: str = "exact"

    def __post_init__(self):
        if not 0 < self.ratio < 1:
            raise ValidationError("ratio must lie in (0, 1)")
        if not self.s0 > 0:
            raise ValidationError("s0 must be positive")
        if not 0 <= self.n_min < self.n_max:
            raise ValidationError("need 0 <= n_min < n_max")
        if self.tau < 0:
            raise ValidationError("tau must be non-negative")
        if not self.s0_offsets or min(self.s0_offsets) <= 0:
            raise ValidationError("s0_offsets must be positive")
        self.r_values = np.sort(np.asarray(self.r_values, dtype=float))[::-1]
        if self.r_values.size == 0 or self.r_values.min() <= 0:
            raise ValidationError("r_values must be positive")
        if int(self.directions) < 1:
            raise ValidationError("directions must be >= 1")
        if self.zeta_integration not in ("exact", "quadrature"):
            raise ValidationError(f"unknown zeta integration {self.zeta_integration!r}")

    def sequence(self, offset, scale=1.0):
        """``s_n = s0 * offset * ratio**n / scale`` for ``n = 0..n_max``."""
        n = np.arange(self.n_max + 1)
        return self.s0 * offset * self.ratio**n / scale


@dataclass(eq=False)
class StationaryTriple:
    u_bar: np.ndarray
    y_bar: np.ndarray
    phi_bar: np.ndarray
    d_bar: np.ndarray
    foc_residual: float
    linearization: Linearization = field(repr=False)

    @classmethod
    def from_control(cls, spec, u, tol=None):
        """Solve state and adjoint at ``u``; refuse if the FOC residual exceeds ``tol``."""
        u = spec.mesh.check(u, "u")
        y, phi = adjoint_state(spec, u)
        d = phi + spec.nu * u
        res = foc_residual(spec, u, d)
        if tol is not None and res > tol:
            raise NotStationaryError(res, tol)
        return cls(u, y, phi, d, res, Linearization(spec, y))


def _weights(spec, triple, cfg):
    """Per-cell ``grad y . grad phi``, optionally zeroed on straddling cells."""
    mesh = spec.mesh
    gy = element_gradient(mesh, triple.y_bar)
    if cfg is not None and cfg.zero_straddling_gradient and spec.coefficient.K:
        vals = triple.y_bar[mesh.cells]
        lo, hi = vals.min(axis=1), vals.max(axis=1)
        t = np.asarray(spec.coefficient.breakpoints)
        straddle = np.any((lo[:, None] <= t) & (t <= hi[:, None]) & (lo < hi)[:, None], axis=1)
        gy = np.where(straddle[:, None], 0.0, gy)
    return np.sum(gy * element_gradient(mesh, triple.phi_bar), axis=1)


def Q_smooth(spec, triple, h1, h2, cfg=None):
    mesh, coef = spec.mesh, spec.coefficient
    lin = triple.linearization
    z1, z2 = lin.solve(h1), lin.solve(h2)
    a2 = coef.second_deriv(lin.y_quad)
    w = _weights(spec, triple, cfg)[:, None]
    curv = mesh.integrate(a2 * mesh.at_quad(z1) * mesh.at_quad(z2) * w)
    return (
        0.5 * spec.objective.hessian(mesh, triple.y_bar, z1, z2)
        + 0.5 * spec.nu * inner_l2(mesh, h1, h2)
        - 0.5 * curv
    )


def Q_one(spec, triple, h1, h2):
    mesh, coef = spec.mesh, spec.coefficient
    lin = triple.linearization
    z1, z2 = lin.solve(h1), lin.solve(h2)
    gphi = element_gradient(mesh, triple.phi_bar)
    g1 = np.sum(element_gradient(mesh, z1) * gphi, axis=1)[:, None]
    g2 = np.sum(element_gradient(mesh, z2) * gphi, axis=1)[:, None]
    dd1 = coef.dir_deriv(lin.y_quad, mesh.at_quad(z1))
    dd2 = coef.dir_deriv(lin.y_quad, mesh.at_quad(z2))
    return -0.5 * mesh.integrate(dd1 * g2 + dd2 * g1)


# -- jump bands ----------------------------------------------------------------


def _band_specs(coef):
    """Per breakpoint: (t, jump coefficient, y_bar constraints, y_s constraints)."""
    d = coef.delta
    out = []
    for k, t in enumerate(coef.breakpoints, start=1):
        left, right = coef.one_sided_slopes(k)
        # y_bar just above t, perturbed state at or below t
        out.append((t, left - right, [(0, ">", t), (0, "<", t + d)], [(1, ">", t - d), (1, "<=", t)]))
        # y_bar just below t, perturbed state at or above t
        out.append((t, right - left, [(0, ">", t - d), (0, "<", t)], [(1, ">=", t), (1, "<", t + d)]))
    return out


def _perturbed_state(spec, triple, s, h):
    y, report = solve_state(spec, triple.u_bar + s * h, spec.state_cfg, y0=triple.y_bar)
    if not report.converged:
        log.warning("perturbed state solve did not converge (s=%.3g)", s)
    return y


def zeta_terms(spec, triple, s, h, y_s=None):
    """``sum_i zeta_i`` at quadrature points for the step ``s`` along ``h``."""
    if not s > 0:
        raise ValidationError("s must be positive")
    mesh = spec.mesh
    y_s = _perturbed_state(spec, triple, s, h) if y_s is None else y_s
    yb, ys = mesh.at_quad(triple.y_bar), mesh.at_quad(y_s)
    out = np.zeros_like(yb)
    tests = {">": np.greater, ">=": np.greater_equal, "<": np.less, "<=": np.less_equal}
    for t, jump, c_bar, c_s in _band_specs(spec.coefficient):
        if jump == 0:
            continue
        mask = np.ones(yb.shape, dtype=bool)
        for _, op, bound in c_bar:
            mask &= tests[op](yb, bound)
        for _, op, bound in c_s:
            mask &= tests[op](ys, bound)
        out += np.where(mask, jump * (t - ys), 0.0)
    return out


def zeta_cell_integrals(spec, triple, y_s):
    """Exact per-cell integrals of ``sum_i zeta_i`` for a given perturbed state."""
    mesh = spec.mesh
    out = np.zeros(mesh.n_cells)
    for t, jump, c_bar, c_s in _band_specs(spec.coefficient):
        if jump == 0:
            continue
        out += clipped_integrals(
            mesh, [triple.y_bar, y_s], c_bar + c_s, (jump * t, 0.0, -jump)
        )
    return out


def _q_value(spec, triple, s, h, w, cfg):
    y_s = _perturbed_state(spec, triple, s, h)
    if cfg.zeta_integration == "exact":
        val = float(np.dot(zeta_cell_integrals(spec, triple, y_s), w))
    else:
        val = spec.mesh.integrate(zeta_terms(spec, triple, s, h, y_s) * w[:, None])
    return val / s**2


def Q_tilde(spec, triple, seq, h, cfg=None):
    """Tail minimum of ``q_n = s_n^-2 int zeta(s_n) grad y . grad phi``.

    ``seq[n]`` is ``s_n``; only ``n >= cfg.n_min`` enter the minimum.
    Returns ``(value, table)`` with rows ``(n, s_n, q_n)``.
    """
    cfg = cfg or SOCConfig()
    seq = np.asarray(seq, dtype=float)
    if np.any(seq <= 0) or np.any(np.diff(seq) >= 0):
        raise ValidationError("step sequence must be positive and strictly decreasing")
    w = _weights(spec, triple, cfg)
    table = []
    if not np.any(h) or not any(spec.coefficient.sigmas):
        table = [(n, float(seq[n]), 0.0) for n in range(cfg.n_min, len(seq))]
        return 0.0, table
    for n in range(cfg.n_min, len(seq)):
        table.append((n, float(seq[n]), _q_value(spec, triple, seq[n], h, w, cfg)))
    return min(q for _, _, q in table), table


def Q_two(spec, triple, h, cfg=None, return_tables=False):
    """Minimum of ``Q_tilde`` over geometric sequences ``s0 * m * ratio**n``.

    The sequences are divided by ``||z_h||_inf`` so that the band width in
    state space is independent of the size of ``h``.
    """
    cfg = cfg or SOCConfig()
    z = triple.linearization.solve(h)
    zinf = float(np.max(np.abs(z)))
    tables = {}
    if zinf == 0.0:
        return (0.0, tables) if return_tables else 0.0
    best = np.inf
    for m in cfg.s0_offsets:
        val, tab = Q_tilde(spec, triple, cfg.sequence(m, zinf), h, cfg)
        tables[float(m)] = tab
        best = min(best, val)
    return (float(best), tables) if return_tables else float(best)


# -- jump functional -------------------------------------------------------------


def sigma_functional(spec, y, cfg=None):
    """Jump functional of ``y`` and its r-sweep.

    Returns ``(value, table)`` with rows ``(r, value_r, admissible)``.  The
    value is the maximum of ``value_r`` over the smallest admissible decade
    of ``r``; radii below ``r_floor_factor * h * ||grad y||_inf`` are
    reported but not used.
    """
    cfg = cfg or SOCConfig()
    mesh, coef = spec.mesh, spec.coefficient
    y = mesh.check(y, "y")
    grad = element_gradient(mesh, y)
    l1 = np.sum(np.abs(grad), axis=1)
    _, I_plus = coef.index_sets(float(y.min()), float(y.max()))
    floor = cfg.r_floor_factor * mesh.h * float(np.max(np.linalg.norm(grad, axis=1)))
    table = []
    for r in cfg.r_values:
        total = 0.0
        for k in sorted(I_plus):
            t, sig = coef.breakpoints[k - 1], coef.sigmas[k - 1]
            if sig:
                total += sig * float(np.dot(l1, band_measure(mesh, y, t - r, t + r)))
        table.append((float(r), total / r, bool(r >= floor)))
    adm = [row for row in table if row[2]]
    if not adm:
        log.warning("no admissible r above the resolution floor %.3g; using all radii", floor)
        adm = table
    r_min = min(row[0] for row in adm)
    value = max(row[1] for row in adm if row[0] <= 10 * r_min * (1 + 1e-12))
    return float(value), table


# -- Taylor identity ---------------------------------------------------------------


def taylor_terms(spec, triple, u, y_u=None):
    """Left and right sides of the exact second-order expansion of ``j``."""
    mesh, coef = spec.mesh, spec.coefficient
    y_u = state_of(spec, u, y0=triple.y_bar) if y_u is None else y_u
    yb, phi = triple.y_bar, triple.phi_bar
    du, dy = u - triple.u_bar, y_u - yb
    lhs = objective(spec, u, y_u) - objective(spec, triple.u_bar, yb)
    yq, ybq = mesh.at_quad(y_u), triple.linearization.y_quad
    da = coef.eval(yq) - coef.eval(ybq)
    gphi = element_gradient(mesh, phi)
    w_dy = np.sum(element_gradient(mesh, dy) * gphi, axis=1)[:, None]
    w_y = np.sum(element_gradient(mesh, yb) * gphi, axis=1)[:, None]
    rem = da - coef.deriv_off_exceptional(ybq) * (yq - ybq)
    rhs = (
        spec.objective.taylor_term(mesh, yb, y_u)
        + 0.5 * spec.nu * inner_l2(mesh, du, du)
        + inner_l2(mesh, triple.d_bar, du)
        - mesh.integrate(da * w_dy)
        - mesh.integrate(rem * w_y)
    )
    return float(lhs), float(rhs)


def taylor_residual(spec, triple, u, y_u=None):
    lhs, rhs = taylor_terms(spec, triple, u, y_u)
    return abs(lhs - rhs)


def taylor_table(spec, triple, h, sizes=(1e-1, 1e-2, 1e-3)):
    """Rows ``(size, lhs, rhs, residual)`` for ``u = P(u_bar + size * h)``."""
    rows = []
    for s in sizes:
        u = project_box(spec.bounds, triple.u_bar + s * h)
        lhs, rhs = taylor_terms(spec, triple, u)
        rows.append((float(s), lhs, rhs, abs(lhs - rhs)))
    return rows


# -- critical cone and verdicts ------------------------------------------------------


def critical_cone_project(triple, bounds, h, tau=0.0, tol_active=None):
    """Nodewise projection onto the (tau-extended) critical cone."""
    h = np.asarray(h, dtype=float)
    if tol_active is None:
        gap = bounds.beta - bounds.alpha
        tol_active = np.where(np.isfinite(gap), 1e-8 * gap, 0.0)
    u, d = triple.u_bar, triple.d_bar
    out = np.where(u <= bounds.alpha + tol_active, np.maximum(h, 0.0), h)
    out = np.where(u >= bounds.beta - tol_active, np.minimum(out, 0.0), out)
    return np.where(np.abs(d) > tau, 0.0, out)


def sample_directions(spec, triple, cfg):
    """Seeded Gaussian fields, one Jacobi smoothing pass, cone projection, unit L2 norm.

    Returns ``(directions, n_skipped)``.
    """
    mesh = spec.mesh
    rng = np.random.default_rng(cfg.seed)
    K = mesh.neumann_stiffness
    dinv = 1.0 / K.diagonal()
    out, skipped = [], 0
    for _ in range(int(cfg.directions)):
        g = rng.standard_normal(mesh.n_nodes)
        g = g - (2.0 / 3.0) * dinv * (K @ g)
        g = critical_cone_project(triple, spec.bounds, g, cfg.tau)
        nrm = norms(mesh, g)[0]
        if nrm <= 1e-14:
            skipped += 1
            continue
        out.append(g / nrm)
    return out, skipped


@dataclass
class CurvatureReport:
    directions: list = field(default_factory=list)
    sigma: float = 0.0
    sigma_table: list = field(default_factory=list)
    foc_residual: float = 0.0
    snc_tol: float = 0.0
    snc_ok: bool = True
    ssc_margin: float | None = None
    n_skipped: int = 0
    message: str = ""

    @property
    def totals(self):
        return [d["total"] for d in self.directions]

    def to_dict(self):
        out = asdict(self)
        for d in out["directions"]:
            d.pop("q_tables", None)
        return out

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), sort_keys=True, **kw)

    def write_tables(self, out_dir):
        """CSV dumps: ``q_tables.csv`` and ``sigma_sweep.csv``."""
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "q_tables.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["direction", "offset", "n", "s_n", "q_n"])
            for d in self.directions:
                for m, rows in sorted(d.get("q_tables", {}).items()):
                    for n, s, q in rows:
                        w.writerow([d["index"], repr(m), n, repr(s), repr(q)])
        with open(os.path.join(out_dir, "sigma_sweep.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "value", "admissible"])
            for r, v, a in self.sigma_table:
                w.writerow([repr(r), repr(v), int(a)])


def curvature(spec, triple, h, cfg=None, sigma=None):
    """All curvature parts for one direction, as a dict."""
    cfg = cfg or SOCConfig()
    if sigma is None:
        sigma, _ = sigma_functional(spec, triple.y_bar, cfg)
    qs = Q_smooth(spec, triple, h, h, cfg)
    q1 = Q_one(spec, triple, h, h)
    q2, tables = Q_two(spec, triple, h, cfg, return_tables=True)
    z = triple.linearization.solve(h)
    grad_phi = element_gradient(spec.mesh, triple.phi_bar)
    bound = sigma * float(np.max(np.linalg.norm(grad_phi, axis=1))) * float(np.max(np.abs(z))) ** 2
    return {
        "Q_s": float(qs),
        "Q_1": float(q1),
        "Q_2": float(q2),
        "total": float(qs + q1 + q2),
        "norm": norms(spec.mesh, h)[0],
        "q2_bound": bound,
        "q_tables": tables,
    }


def soc_report(spec, triple, cfg=None):
    """Sample critical directions and evaluate ``Q_s + Q_1 + Q_2`` on each.

    Raises :class:`NotStationaryError` when the triple violates the
    first-order conditions by more than ``cfg.foc_tol``.
    """
    cfg = cfg or SOCConfig()
    if triple.foc_residual > cfg.foc_tol:
        raise NotStationaryError(triple.foc_residual, cfg.foc_tol)
    sigma, sigma_table = sigma_functional(spec, triple.y_bar, cfg)
    dirs, skipped = sample_directions(spec, triple, cfg)
    report = CurvatureReport(
        sigma=sigma, sigma_table=sigma_table, foc_residual=triple.foc_residual,
        snc_tol=cfg.snc_tol, n_skipped=skipped,
    )
    for i, h in enumerate(dirs):
        entry = curvature(spec, triple, h, cfg, sigma)
        entry["index"] = i
        report.directions.append(entry)
        log.info("direction %d: Q_s=%.6e Q_1=%.6e Q_2=%.6e", i, entry["Q_s"], entry["Q_1"], entry["Q_2"])
    if not dirs:
        report.message = "critical cone trivial: SSC holds vacuously"
        return report
    totals = np.array(report.totals)
    report.snc_ok = bool(totals.min() >= -cfg.snc_tol)
    report.ssc_margin = float(min(d["total"] / d["norm"] ** 2 for d in report.directions))
    report.message = "second-order necessary condition holds on sampled directions" if report.snc_ok \
        else "negative curvature found on a critical direction"
    return report
