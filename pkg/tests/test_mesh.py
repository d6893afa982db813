import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcq.exceptions import SingularSystemError, ValidationError
from pcq.mesh import (
    SparseOperator,
    assemble_operator,
    build_mesh,
    dual_norm,
    element_gradient,
    export_coo,
    h1_norm,
    inner_l2,
    norms,
    solve_dirichlet,
)

from conftest import unit_mesh

import scipy.sparse as sp


def poisson_1d(n):
    mesh = unit_mesh(1, n)
    op = assemble_operator(mesh, np.ones(mesh.quad_weights.shape))
    f = mesh.interpolate(lambda x: np.pi**2 * np.sin(np.pi * x))
    y = solve_dirichlet(op, mesh.lumped_mass * f)
    return mesh, y, mesh.interpolate(lambda x: np.sin(np.pi * x))


def poisson_2d(n, method="direct"):
    mesh = unit_mesh(2, n)
    op = assemble_operator(mesh, np.ones(mesh.quad_weights.shape))
    exact = mesh.interpolate(lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
    y = solve_dirichlet(op, mesh.lumped_mass * 2 * np.pi**2 * exact, method=method)
    return mesh, y, exact


class TestBuild:
    def test_counts_1d(self):
        mesh = build_mesh(1, (0, 1), 4)
        assert mesh.n_nodes == 5 and mesh.n_cells == 4
        assert np.flatnonzero(mesh.boundary_mask).tolist() == [0, 4]

    def test_counts_2d(self):
        mesh = build_mesh(2, ((0, 1), (0, 1)), 2)
        assert mesh.n_nodes == 9 and mesh.n_cells == 8
        assert mesh.boundary_mask.sum() == 8
        assert np.all(mesh.cell_measure > 0)
        assert mesh.cell_measure.sum() == pytest.approx(1.0)

    def test_rectangle_anisotropic(self):
        mesh = build_mesh(2, ((0, 2), (0, 1)), (4, 3))
        assert mesh.n_nodes == 20 and mesh.n_cells == 24
        assert mesh.cell_measure.sum() == pytest.approx(2.0)
        assert mesh.h == pytest.approx(0.5)

    @pytest.mark.parametrize("args", [(1, (0, 1), 1), (3, (0, 1), 4), (1, (1, 0), 4), (2, ((0, 1),), 4)])
    def test_invalid(self, args):
        with pytest.raises(ValidationError):
            build_mesh(*args)

    def test_check_shape(self):
        mesh = unit_mesh(1, 4)
        with pytest.raises(ValidationError, match="shape"):
            mesh.check(np.zeros(3))


class TestAssembly:
    def test_three_node_stiffness(self):
        mesh = build_mesh(1, (0, 1), 2)
        K = mesh.neumann_stiffness.toarray()
        assert np.allclose(K, [[2, -2, 0], [-2, 4, -2], [0, -2, 2]])
        op = assemble_operator(mesh, np.ones(mesh.quad_weights.shape))
        assert op.matrix.toarray().tolist() == [[4.0]]

    @pytest.mark.parametrize("dim", [1, 2])
    def test_symmetric_positive_definite(self, dim):
        mesh = unit_mesh(dim, 6)
        rng = np.random.default_rng(1)
        op = assemble_operator(mesh, 1 + rng.random(mesh.quad_weights.shape))
        A = op.matrix.toarray()
        assert np.abs(A - A.T).max() <= 1e-14 * np.abs(A).max()
        assert np.linalg.eigvalsh(A).min() > 0

    @pytest.mark.parametrize("dim", [1, 2])
    def test_convection_transposes(self, dim):
        mesh = unit_mesh(dim, 5)
        rng = np.random.default_rng(2)
        c = rng.standard_normal(mesh.quad_weights.shape + (dim,))
        A1 = assemble_operator(mesh, conv_div=c).matrix
        A2 = assemble_operator(mesh, conv_grad=c).matrix
        assert abs(A1 - A2.T).max() == 0.0

    def test_rejects_bad_kappa(self):
        mesh = unit_mesh(1, 4)
        with pytest.raises(ValidationError):
            assemble_operator(mesh, np.zeros(mesh.quad_weights.shape))
        with pytest.raises(ValidationError):
            assemble_operator(mesh, np.ones((2, 2)))
        with pytest.raises(ValidationError):
            assemble_operator(mesh, conv_div=np.ones(mesh.quad_weights.shape))

    @pytest.mark.parametrize("dim", [1, 2])
    def test_affine_dirichlet_reproduction(self, dim):
        # lift affine boundary data: K_ff x = -K_fb g_b must return g on the interior
        mesh = unit_mesh(dim, 7)
        g = mesh.interpolate(lambda *x: 0.3 + x[0] - (2 * x[1] if dim == 2 else 0))
        K = mesh.neumann_stiffness
        f, b = mesh.free, mesh.boundary_mask
        x = sp.linalg.spsolve(K[f][:, f].tocsc(), -K[f][:, b] @ g[b])
        assert np.allclose(x, g[f], atol=1e-12)

    def test_quadrature_integrates_quadratics(self):
        mesh = unit_mesh(2, 3)
        xq = mesh.quad_points
        val = mesh.integrate(xq[..., 0] ** 2 + xq[..., 0] * xq[..., 1])
        assert val == pytest.approx(1 / 3 + 1 / 4, abs=1e-14)
        m1 = unit_mesh(1, 3)
        assert m1.integrate(m1.quad_points[..., 0] ** 3) == pytest.approx(0.25, abs=1e-14)


class TestSolve:
    def test_poisson_1d_nodal_error(self):
        errs = []
        for n in (16, 32, 64):
            mesh, y, exact = poisson_1d(n)
            errs.append(np.abs(y - exact).max() / mesh.h**2)
        assert max(errs) < 1.0
        assert errs[-1] == pytest.approx(errs[-2], rel=0.05)

    def test_poisson_2d_rate(self):
        e = [norms(m, y - ex)[0] for m, y, ex in (poisson_2d(n) for n in (8, 16, 32))]
        assert e[0] / e[1] > 3.5 and e[1] / e[2] > 3.5

    def test_zero_load(self):
        mesh = unit_mesh(2, 4)
        op = assemble_operator(mesh, np.ones(mesh.quad_weights.shape))
        assert not np.any(solve_dirichlet(op, np.zeros(mesh.n_nodes)))

    def test_cg_matches_direct(self):
        _, y1, _ = poisson_2d(16)
        mesh, y2, _ = poisson_2d(16, method="cg")
        assert np.abs(y1 - y2).max() < 1e-9
        assert np.all(y2[mesh.boundary_mask] == 0)

    def test_cg_needs_symmetry(self):
        mesh = unit_mesh(1, 4)
        c = np.ones(mesh.quad_weights.shape + (1,))
        op = assemble_operator(mesh, np.ones(mesh.quad_weights.shape), conv_div=c)
        with pytest.raises(ValidationError):
            solve_dirichlet(op, np.ones(mesh.n_nodes), method="cg")

    def test_transpose_solve(self):
        mesh = unit_mesh(2, 5)
        rng = np.random.default_rng(3)
        c = rng.standard_normal(mesh.quad_weights.shape + (2,))
        op = assemble_operator(mesh, np.ones(mesh.quad_weights.shape), conv_div=c)
        f = mesh.extend(rng.standard_normal(op.matrix.shape[0]))
        x = solve_dirichlet(op, f, transpose=True)
        assert np.allclose(op.matrix.T @ x[mesh.free], f[mesh.free], atol=1e-12)

    def test_singular(self):
        mesh = unit_mesh(1, 3)
        op = SparseOperator(mesh, sp.csr_matrix((2, 2)), True)
        with pytest.raises(SingularSystemError):
            solve_dirichlet(op, np.ones(mesh.n_nodes))


class TestNorms:
    def test_examples(self):
        mesh = unit_mesh(1, 10)
        assert norms(mesh, mesh.constant(1.0))[0] == pytest.approx(1.0)
        x = mesh.interpolate(lambda x: x)
        assert norms(mesh, x)[1] == pytest.approx(1.0)
        assert norms(mesh, x)[2] == 1.0
        assert inner_l2(mesh, x, x) == pytest.approx(norms(mesh, x)[0] ** 2)
        assert h1_norm(mesh, x) == pytest.approx(np.hypot(*norms(mesh, x)[:2]))

    def test_element_gradient(self):
        m1 = unit_mesh(1, 5)
        assert np.allclose(element_gradient(m1, m1.interpolate(lambda x: x)), 1.0)
        assert not np.any(element_gradient(m1, m1.constant(3.0)))
        m2 = unit_mesh(2, 4)
        g = element_gradient(m2, m2.interpolate(lambda x, y: x + 2 * y))
        assert np.allclose(g, [1.0, 2.0])

    def test_dual_norm_of_laplacian(self):
        # ||K v||_{H^-1} = |v|_{H^1} for v vanishing on the boundary
        mesh = unit_mesh(2, 6)
        v = mesh.interpolate(lambda x, y: x * (1 - x) * y * (1 - y))
        K = mesh.neumann_stiffness
        r = (K @ v)[mesh.free]
        assert dual_norm(mesh, r) == pytest.approx(norms(mesh, v)[1], rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 2), st.integers(2, 9), st.integers(0, 2**31))
def test_inner_product_symmetry_and_positivity(dim, n, seed):
    mesh = unit_mesh(dim, n)
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((2, mesh.n_nodes))
    assert inner_l2(mesh, a, b) == pytest.approx(inner_l2(mesh, b, a))
    assert inner_l2(mesh, a, a) > 0
    assert mesh.lumped_mass.sum() == pytest.approx(1.0)


def test_csv_round_trip(tmp_path):
    mesh = unit_mesh(2, 3)
    g = np.random.default_rng(0).standard_normal(mesh.n_nodes)
    mesh.to_csv(tmp_path / "g.csv", g, "g")
    assert np.array_equal(mesh.from_csv(tmp_path / "g.csv"), g)
    other = unit_mesh(2, 4)
    with pytest.raises(ValidationError):
        other.from_csv(tmp_path / "g.csv")


def test_export_coo(tmp_path):
    mesh = unit_mesh(1, 4)
    op = assemble_operator(mesh, np.ones(mesh.quad_weights.shape))
    export_coo(op, tmp_path / "A.txt")
    lines = (tmp_path / "A.txt").read_text().split("\n")
    entries = {(int(i), int(j)): float(v) for i, j, v in (ln.split() for ln in lines if ln)}
    assert entries[(0, 0)] == pytest.approx(8.0) and entries[(0, 1)] == pytest.approx(-4.0)
