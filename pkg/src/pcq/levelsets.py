"""Exact integrals of P1 fields over level bands inside each cell.

Thin bands ``{t < y < t + r}`` shrink below the spacing of quadrature
points long before the limits of interest are reached, so these helpers
integrate them exactly: P1 fields are affine on a cell, which makes every
band a convex polygon (an interval in 1D).
"""

import numpy as np

_OPS = {">": (1.0, True), ">=": (1.0, False), "<": (-1.0, True), "<=": (-1.0, False)}


def sublevel_fraction(vals, c):
    """Fraction of each cell where the affine field is ``<= c``.

    ``vals`` holds vertex values, shape ``(n_cells, dim + 1)``.  Cells on
    which the field is constant count as fully inside iff ``value <= c``.
    """
    v = np.sort(np.asarray(vals, dtype=float), axis=1)
    c = np.asarray(c, dtype=float)
    v0, v_top = v[:, 0], v[:, -1]
    const = v_top == v0
    with np.errstate(divide="ignore", invalid="ignore"):
        if v.shape[1] == 2:
            frac = np.clip((c - v0) / (v_top - v0), 0.0, 1.0)
        else:
            v1 = v[:, 1]
            low = (c - v0) ** 2 / ((v1 - v0) * (v_top - v0))
            high = 1.0 - (v_top - c) ** 2 / ((v_top - v0) * (v_top - v1))
            frac = np.where(c <= v0, 0.0, np.where(c >= v_top, 1.0, np.where(c <= v1, low, high)))
    return np.where(const, (v0 <= c).astype(float), frac)


def band_measure(mesh, g, lo, hi):
    """Per-cell measure of ``{lo < g <= hi}`` for a nodal field ``g``."""
    vals = g[mesh.cells]
    return mesh.cell_measure * (sublevel_fraction(vals, hi) - sublevel_fraction(vals, lo))


def _candidates(cell_vals, constraints):
    keep = np.ones(cell_vals.shape[0], dtype=bool)
    for k, op, bound in constraints:
        sign, strict = _OPS[op]
        ext = np.max(sign * (cell_vals[:, k, :] - bound), axis=1)
        keep &= ext > 0 if strict else ext >= 0
    return np.flatnonzero(keep)


def _clip_intervals(vals, constraints):
    # vals: (n, n_fields, 2); parametrize each cell by lam in [0, 1]
    n = vals.shape[0]
    lo, hi = np.zeros(n), np.ones(n)
    for k, op, bound in constraints:
        sign, strict = _OPS[op]
        q = sign * (vals[:, k, 0] - bound)
        m = sign * (vals[:, k, 1] - vals[:, k, 0])
        with np.errstate(divide="ignore", invalid="ignore"):
            root = -q / m
        lo = np.where(m > 0, np.maximum(lo, root), lo)
        hi = np.where(m < 0, np.minimum(hi, root), hi)
        flat_ok = q > 0 if strict else q >= 0
        hi = np.where((m == 0) & ~flat_ok, lo, hi)
    return lo, np.maximum(hi, lo)


def _clip_polygon(poly, k, sign, bound, strict):
    s = sign * (poly[:, k] - bound)
    if np.all(s == 0):
        return poly[:0] if strict else poly
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        sp_, sq = s[i], s[(i + 1) % n]
        if sp_ >= 0:
            out.append(p)
        if (sp_ > 0 > sq) or (sp_ < 0 < sq):
            out.append(p + (sp_ / (sp_ - sq)) * (q - p))
    return np.array(out) if out else poly[:0]


def clipped_integrals(mesh, fields, constraints, integrand):
    """Integrate an affine combination of fields over constrained subsets of cells.

    ``fields`` is a list of nodal arrays.  Each constraint is a tuple
    ``(field_index, op, bound)`` with ``op`` one of ``> >= < <=``.
    ``integrand`` is ``(c0, c1, ..., c_nf)`` meaning ``c0 + sum_k ck * field_k``.
    Returns per-cell integrals of shape ``(n_cells,)``; strict and closed
    inequalities differ only on cells where a constrained field is constant.
    """
    F = np.stack([np.asarray(f, dtype=float) for f in fields])
    cell_vals = np.transpose(F[:, mesh.cells], (1, 0, 2))  # (n_cells, n_fields, n_loc)
    coef = np.asarray(integrand, dtype=float)
    out = np.zeros(mesh.n_cells)
    idx = _candidates(cell_vals, constraints)
    if idx.size == 0:
        return out
    vals = cell_vals[idx]
    if mesh.dim == 1:
        lo, hi = _clip_intervals(vals, constraints)
        mid = 0.5 * (lo + hi)
        at_mid = vals[:, :, 0] + mid[:, None] * (vals[:, :, 1] - vals[:, :, 0])
        out[idx] = mesh.cell_measure[idx] * (hi - lo) * (coef[0] + at_mid @ coef[1:])
        return out
    xy = mesh.nodes[mesh.cells[idx]]  # (n, 3, 2)
    for j, e in enumerate(idx):
        poly = np.hstack([xy[j], vals[j].T])
        for k, op, bound in constraints:
            sign, strict = _OPS[op]
            poly = _clip_polygon(poly, 2 + k, sign, bound, strict)
            if len(poly) < 3:
                break
        if len(poly) < 3:
            continue
        g = coef[0] + poly[:, 2:] @ coef[1:]
        d1 = poly[1:-1, :2] - poly[0, :2]
        d2 = poly[2:, :2] - poly[0, :2]
        area = 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        out[e] = float(np.sum(area * (g[0] + g[1:-1] + g[2:]) / 3.0))
    return out
