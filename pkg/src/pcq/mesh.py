"""Uniform P1 finite elements on intervals and rectangles.

Nodal fields ("grid functions") are plain 1-D arrays of length
``mesh.n_nodes``.  L2 inner products use the lumped (row-sum) mass matrix,
so nodal box projections coincide with L2 projections onto nodal boxes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import SingularSystemError, ValidationError

_G = 0.5 / np.sqrt(3.0)
# barycentric coordinates of the quadrature points and their relative weights
_QUAD_1D = (np.array([[0.5 + _G, 0.5 - _G], [0.5 - _G, 0.5 + _G]]), np.array([0.5, 0.5]))
_QUAD_2D = (
    np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]),
    np.full(3, 1.0 / 3.0),
)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Uniform P1 mesh of an interval (dim 1) or a rectangle (dim 2).

    ``extents`` is ``(x0, x1)`` in 1D and ``((x0, x1), (y0, y1))`` in 2D;
    ``resolution`` is the number of cells per axis (int or pair).  Each 2D
    cell is split into two counter-clockwise right triangles along the
    diagonal from its lower-left to its upper-right corner.
    """

    dim: int
    extents: tuple
    resolution: tuple
    nodes: np.ndarray = field(repr=False)
    cells: np.ndarray = field(repr=False)

    # -- geometry ----------------------------------------------------------

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_cells(self):
        return self.cells.shape[0]

    @property
    def h(self):
        """Largest cell edge length along the axes."""
        return max((b - a) / n for (a, b), n in zip(self._boxes, self.resolution))

    @property
    def _boxes(self):
        return (self.extents,) if self.dim == 1 else self.extents

    @cached_property
    def boundary_mask(self):
        mask = np.zeros(self.n_nodes, dtype=bool)
        for k, (a, b) in enumerate(self._boxes):
            x = self.nodes[:, k]
            tol = 1e-12 * max(1.0, abs(a), abs(b))
            mask |= (np.abs(x - a) < tol) | (np.abs(x - b) < tol)
        return mask

    @cached_property
    def free(self):
        return np.flatnonzero(~self.boundary_mask)

    @cached_property
    def cell_measure(self):
        v = self.nodes[self.cells]
        if self.dim == 1:
            return v[:, 1, 0] - v[:, 0, 0]
        e1, e2 = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def basis_gradients(self):
        """Array ``(n_cells, dim + 1, dim)`` of constant P1 basis gradients."""
        v = self.nodes[self.cells]
        if self.dim == 1:
            L = self.cell_measure
            g = np.stack([-1.0 / L, 1.0 / L], axis=1)
            return g[:, :, None]
        # rows of inv([[1, x, y]]) give the barycentric gradients
        ones = np.ones(v.shape[:2] + (1,))
        T = np.concatenate([ones, v], axis=2)
        inv = np.linalg.inv(T)
        return np.transpose(inv[:, 1:, :], (0, 2, 1))

    @property
    def quad_bary(self):
        return (_QUAD_1D if self.dim == 1 else _QUAD_2D)[0]

    @cached_property
    def quad_weights(self):
        """Absolute weights ``(n_cells, n_q)``."""
        rel = (_QUAD_1D if self.dim == 1 else _QUAD_2D)[1]
        return self.cell_measure[:, None] * rel[None, :]

    @cached_property
    def quad_points(self):
        return np.einsum("qk,ekd->eqd", self.quad_bary, self.nodes[self.cells])

    @cached_property
    def lumped_mass(self):
        m = np.zeros(self.n_nodes)
        share = self.cell_measure / (self.dim + 1)
        np.add.at(m, self.cells, np.repeat(share[:, None], self.dim + 1, axis=1))
        return m

    @cached_property
    def _laplacian_lu(self):
        op = assemble_operator(self, np.ones((self.n_cells, self.quad_bary.shape[0])))
        return spla.splu(op.matrix.tocsc())

    @cached_property
    def neumann_stiffness(self):
        """Unit-coefficient stiffness over all nodes (no boundary elimination)."""
        ones = np.ones((self.n_cells, self.quad_bary.shape[0]))
        return _scatter(self, _local_matrices(self, ones, None, None))

    # -- field helpers -------------------------------------------------------

    def interpolate(self, f):
        """Nodal interpolant of ``f(x)`` (1D) or ``f(x, y)`` (2D)."""
        vals = f(*self.nodes.T)
        return np.broadcast_to(np.asarray(vals, dtype=float), (self.n_nodes,)).copy()

    def constant(self, value):
        return np.full(self.n_nodes, float(value))

    def at_quad(self, g):
        """Values of the P1 interpolant of ``g`` at all quadrature points."""
        g = self.check(g)
        return g[self.cells] @ self.quad_bary.T

    def integrate(self, values_at_quad):
        """Quadrature of per-point values ``(n_cells, n_q)``."""
        return float(np.sum(self.quad_weights * values_at_quad))

    def check(self, g, name="field"):
        g = np.asarray(g, dtype=float)
        if g.shape != (self.n_nodes,):
            raise ValidationError(
                f"{name} has shape {g.shape}, mesh expects ({self.n_nodes},)"
            )
        return g

    def extend(self, free_values):
        out = np.zeros(self.n_nodes)
        out[self.free] = free_values
        return out

    # -- CSV -----------------------------------------------------------------

    def to_csv(self, path, g, name="value"):
        g = self.check(g)
        cols = ["x", "y"][: self.dim] + [name]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for xy, v in zip(self.nodes, g):
                w.writerow([repr(float(c)) for c in xy] + [repr(float(v))])

    def from_csv(self, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if rows and not _is_number(rows[0][0]):
            rows = rows[1:]
        data = np.array([[float(c) for c in r] for r in rows if r])
        if data.shape != (self.n_nodes, self.dim + 1):
            raise ValidationError(
                f"{path}: expected {self.n_nodes} rows of {self.dim + 1} columns, got {data.shape}"
            )
        if not np.allclose(data[:, : self.dim], self.nodes, atol=1e-9):
            raise ValidationError(f"{path}: node coordinates do not match the mesh")
        return data[:, -1].copy()


def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def build_mesh(dim, extents, resolution):
    """Uniform mesh; see :class:`Mesh` for the argument conventions."""
    if dim not in (1, 2):
        raise ValidationError(f"dim must be 1 or 2, got {dim}")
    if dim == 1:
        extents = tuple(float(v) for v in np.ravel(extents))
        if len(extents) != 2:
            raise ValidationError("1D extents must be (x0, x1)")
        boxes = (extents,)
        res = (int(np.ravel([resolution])[0]),)
    else:
        boxes = tuple(tuple(float(v) for v in e) for e in extents)
        if len(boxes) != 2 or any(len(b) != 2 for b in boxes):
            raise ValidationError("2D extents must be ((x0, x1), (y0, y1))")
        r = np.ravel([resolution])
        res = (int(r[0]), int(r[-1]))
    for (a, b), n in zip(boxes, res):
        if not b > a:
            raise ValidationError(f"degenerate extent ({a}, {b})")
        if n < 2:
            raise ValidationError(f"resolution must be >= 2, got {n}")

    if dim == 1:
        (a, b), (n,) = boxes[0], res
        nodes = np.linspace(a, b, n + 1)[:, None]
        cells = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1)
        return Mesh(1, boxes[0], res, nodes, cells)

    (ax, bx), (ay, by) = boxes
    nx, ny = res
    X, Y = np.meshgrid(np.linspace(ax, bx, nx + 1), np.linspace(ay, by, ny + 1))
    nodes = np.stack([X.ravel(), Y.ravel()], axis=1)
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    p00 = (j * (nx + 1) + i).ravel()
    p10, p01 = p00 + 1, p00 + nx + 1
    p11 = p01 + 1
    lower = np.stack([p00, p10, p11], axis=1)
    upper = np.stack([p00, p11, p01], axis=1)
    cells = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return Mesh(2, boxes, res, nodes, cells)


# -- operators ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Bilinear form restricted to the free (interior) nodes."""

    mesh: Mesh
    matrix: sp.csr_matrix
    symmetric: bool

    @cached_property
    def lu(self):
        try:
            return spla.splu(self.matrix.tocsc())
        except RuntimeError as exc:
            raise SingularSystemError(
                f"factorization failed ({exc}); condition estimate {condition_estimate(self.matrix):.3e}"
            ) from exc

    @property
    def T(self):
        return SparseOperator(self.mesh, self.matrix.T.tocsr(), self.symmetric)


def condition_estimate(A):
    A = sp.csc_matrix(A)
    if A.shape[0] <= 2000:
        return float(np.linalg.cond(A.toarray(), 1))
    try:
        lu = spla.splu(A)
        inv = spla.LinearOperator(A.shape, matvec=lu.solve, rmatvec=lambda x: lu.solve(x, "T"))
        return float(spla.onenormest(A) * spla.onenormest(inv))
    except RuntimeError:
        return float("inf")


def _local_matrices(mesh, kappa, conv_div, conv_grad):
    G = mesh.basis_gradients
    W = mesh.quad_weights
    B = mesh.quad_bary
    n_loc = mesh.dim + 1
    local = np.zeros((mesh.n_cells, n_loc, n_loc))
    if kappa is not None:
        kappa = np.asarray(kappa, dtype=float)
        if kappa.shape != W.shape or not np.all(np.isfinite(kappa)):
            raise ValidationError(f"kappa must be finite with shape {W.shape}")
        if np.any(kappa <= 0):
            raise ValidationError(
                f"diffusion coefficient must be positive, min is {kappa.min():.3e}"
            )
        kbar = np.sum(W * kappa, axis=1)
        local += kbar[:, None, None] * np.einsum("ejd,ekd->ejk", G, G)
    for c in (conv_div, conv_grad):
        if c is not None and (np.shape(c) != W.shape + (mesh.dim,) or not np.all(np.isfinite(c))):
            raise ValidationError(f"convection fields need finite shape {W.shape + (mesh.dim,)}")
    if conv_div is not None:
        local += _convection_local(W, G, B, conv_div)
    if conv_grad is not None:
        local += np.swapaxes(_convection_local(W, G, B, conv_grad), 1, 2)
    return local


def _convection_local(W, G, B, c):
    # row j (test), column k (trial): sum_q w (c . grad phi_j) phi_k(x_q)
    cG = np.einsum("eqd,ejd->eqj", np.asarray(c, dtype=float), G)
    return np.einsum("eq,eqj,qk->ejk", W, cG, B)


def _scatter(mesh, local):
    n_loc = mesh.dim + 1
    rows = np.repeat(mesh.cells, n_loc, axis=1).ravel()
    cols = np.tile(mesh.cells, (1, n_loc)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(mesh.n_nodes,) * 2).tocsr()


def assemble_operator(mesh, kappa=None, conv_div=None, conv_grad=None):
    """Assemble ``int k grad w.grad v + (c1.grad v) w + (c2.grad w) v``.

    ``kappa`` has shape ``(n_cells, n_q)``; the convection fields have shape
    ``(n_cells, n_q, dim)``.  Homogeneous Dirichlet rows and columns are
    eliminated.
    """
    full = _scatter(mesh, _local_matrices(mesh, kappa, conv_div, conv_grad))
    free = mesh.free
    A = full[free][:, free].tocsr()
    A.sort_indices()
    return SparseOperator(mesh, A, symmetric=conv_div is None and conv_grad is None)


def solve_dirichlet(op, load, method="direct", transpose=False, rtol=1e-12):
    """Solve with a full-length nodal load vector; returns a nodal field.

    The load is an integrated right-hand side (e.g. ``M u``); entries on
    boundary nodes are ignored and the result vanishes there.
    """
    mesh = op.mesh
    f = mesh.check(load, "load")[mesh.free]
    A = op.matrix.T if transpose else op.matrix
    if not np.any(f):
        return np.zeros(mesh.n_nodes)
    if method == "direct":
        x = op.lu.solve(f, "T" if transpose else "N")
    elif method == "cg":
        if not op.symmetric:
            raise ValidationError("CG requires a symmetric operator")
        x, info = spla.cg(A, f, rtol=rtol * 1e-2, atol=0.0, maxiter=10 * A.shape[0])
        if info != 0:
            raise SingularSystemError(f"CG did not converge (info={info})")
    else:
        raise ValidationError(f"unknown method {method!r}")
    if not np.all(np.isfinite(x)):
        raise SingularSystemError(
            f"non-finite solution; condition estimate {condition_estimate(A):.3e}"
        )

    def backward_error(x):
        # normwise backward error |Ax - f| / (|A| |x| + |f|) in the inf-norm
        r = np.abs(A @ x - f).max()
        return r / (spla.norm(A, np.inf) * np.abs(x).max() + np.abs(f).max())

    err = backward_error(x)
    if method == "direct" and err > rtol:
        # one step of iterative refinement before giving up
        x = x + op.lu.solve(f - A @ x, "T" if transpose else "N")
        err = backward_error(x)
    if err > max(rtol, 1e-10 if method == "cg" else rtol):
        raise SingularSystemError(
            f"backward error {err:.3e} too large; condition estimate {condition_estimate(A):.3e}"
        )
    return mesh.extend(x)


# -- norms and gradients ------------------------------------------------------


def inner_l2(mesh, g1, g2):
    return float(np.dot(mesh.lumped_mass * mesh.check(g1), mesh.check(g2)))


def element_gradient(mesh, g):
    """Constant gradient of the P1 interpolant on each cell, ``(n_cells, dim)``."""
    g = mesh.check(g)
    return np.einsum("ek,ekd->ed", g[mesh.cells], mesh.basis_gradients)


def norms(mesh, g):
    """``(L2, H1 seminorm, Linf)`` of a nodal field."""
    g = mesh.check(g)
    grad = element_gradient(mesh, g)
    l2 = np.sqrt(max(inner_l2(mesh, g, g), 0.0))
    h1 = np.sqrt(np.sum(mesh.cell_measure * np.sum(grad**2, axis=1)))
    return float(l2), float(h1), float(np.max(np.abs(g)))


def h1_norm(mesh, g):
    l2, h1, _ = norms(mesh, g)
    return float(np.hypot(l2, h1))


def dual_norm(mesh, residual_free):
    """Discrete H^{-1} norm of a residual given on the free nodes."""
    w = mesh._laplacian_lu.solve(residual_free)
    return float(np.sqrt(max(np.dot(residual_free, w), 0.0)))


def export_coo(op, path):
    """Write an operator as ``row col value`` lines (free-node numbering)."""
    A = op.matrix.tocoo()
    with open(path, "w") as fh:
        for i, j, v in zip(A.row, A.col, A.data):
            fh.write(f"{int(i)} {int(j)} {float(v)!r}\n")
