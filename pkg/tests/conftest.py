import numpy as np
import pytest

from pcq.coefficient import PC2Coefficient
from pcq.mesh import build_mesh
from pcq.problem import BoxBounds, OptimizeConfig, ProblemSpec, TrackingObjective, projected_gradient
from pcq.second_order import StationaryTriple
from pcq.solvers import StateSolveConfig

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


def curved_kink(t0=0.1):
    """``|t - t0| + t^2 / 2``: one breakpoint, curved pieces, sigma = 2."""
    return PC2Coefficient([t0], [[t0, -1.0, 0.5], [-t0, 1.0, 0.5]], working_range=(-3, 3))


def unit_mesh(dim, res):
    return build_mesh(dim, (0.0, 1.0) if dim == 1 else ((0.0, 1.0), (0.0, 1.0)), res)


def make_spec(mesh, coefficient, nu=1e-3, bound=6.0, b=None, y_d=None, tol=1e-12):
    b = mesh.constant(1.0) if b is None else b
    if y_d is None:
        y_d = mesh.interpolate(
            lambda *x: 0.5 * np.sin(2 * np.pi * x[0]) * (np.sin(np.pi * x[1]) if mesh.dim == 2 else 1.0)
        )
    return ProblemSpec(mesh, b, coefficient, nu, BoxBounds.constant(mesh, -bound, bound),
                       TrackingObjective(y_d), StateSolveConfig(tol=tol))


@pytest.fixture(scope="session")
def nonsmooth_1d():
    """Nonsmooth 1D problem whose optimal state crosses the breakpoint, with active bounds."""
    spec = make_spec(unit_mesh(1, 256), curved_kink())
    u, report = projected_gradient(spec, spec.mesh.constant(0.0), OptimizeConfig(tol=1e-8, max_iter=2000))
    assert report.converged, report.status
    return spec, StationaryTriple.from_control(spec, u, 1e-6), report


@pytest.fixture(scope="session")
def nonsmooth_2d():
    mesh = unit_mesh(2, 24)
    # the 2D optimal state peaks near 0.09, so the breakpoint sits lower than in 1D
    spec = make_spec(mesh, curved_kink(0.03), bound=4.0, b=mesh.interpolate(lambda x, y: 1 + x / 2))
    u, report = projected_gradient(spec, mesh.constant(0.0), OptimizeConfig(tol=1e-8, max_iter=2000))
    assert report.converged, report.status
    return spec, StationaryTriple.from_control(spec, u, 1e-6), report


@pytest.fixture(scope="session")
def convex_1d():
    mesh = unit_mesh(1, 32)
    spec = make_spec(mesh, PC2Coefficient.zero(), nu=1e-2, bound=1.0,
                     y_d=mesh.interpolate(lambda x: 0.3 * np.sin(2 * np.pi * x) + 0.2))
    u, report = projected_gradient(spec, mesh.constant(0.0), OptimizeConfig(tol=1e-9, max_iter=2000))
    assert report.converged, report.status
    return spec, StationaryTriple.from_control(spec, u, 1e-6), report


def smooth_directions(mesh, count, seed):
    """Seeded random fields smoothed by one Jacobi pass, unit L2 norm."""
    from pcq.mesh import norms

    rng = np.random.default_rng(seed)
    K = mesh.neumann_stiffness
    out = []
    for _ in range(count):
        g = rng.standard_normal(mesh.n_nodes)
        g = g - (2 / 3) * (K @ g) / K.diagonal()
        out.append(g / norms(mesh, g)[0])
    return out
