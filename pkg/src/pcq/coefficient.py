"""Finitely piecewise-C2 scalar coefficients with polynomial pieces.

A coefficient is stored as breakpoints ``t_1 < ... < t_K`` and ``K + 1``
polynomial selections ``a_0, ..., a_K``.  Piece ``i`` is active on the
half-open interval ``(t_i, t_{i+1}]`` with ``t_0 = -inf`` and
``t_{K+1} = +inf``.  All evaluators accept scalars or arrays and return the
same shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

from .exceptions import ValidationError

MAX_DEGREE = 4
CONTINUITY_TOL = 1e-12


@dataclass(frozen=True)
class PolynomialPiece:
    """Polynomial with ascending coefficients, degree at most 4."""

    coeffs: tuple

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        if c.ndim != 1 or c.size == 0:
            raise ValidationError("polynomial piece needs a non-empty coefficient list")
        if not np.all(np.isfinite(c)):
            raise ValidationError("polynomial coefficients must be finite")
        # trailing zeros do not count towards the degree
        nz = np.nonzero(c)[0]
        degree = int(nz[-1]) if nz.size else 0
        if degree > MAX_DEGREE:
            raise ValidationError(f"polynomial degree {degree} exceeds {MAX_DEGREE}")
        object.__setattr__(self, "coeffs", tuple(float(v) for v in c))

    @property
    def degree(self):
        c = np.asarray(self.coeffs)
        nz = np.nonzero(c)[0]
        return int(nz[-1]) if nz.size else 0

    def value(self, t):
        return npoly.polyval(t, self.coeffs)

    def deriv(self, t):
        return npoly.polyval(t, npoly.polyder(self.coeffs, 1))

    def deriv2(self, t):
        return npoly.polyval(t, npoly.polyder(self.coeffs, 2))

    def primitive(self, t):
        """Antiderivative vanishing at 0."""
        return npoly.polyval(t, npoly.polyint(self.coeffs))


def _as_pieces(pieces):
    out = []
    for p in pieces:
        out.append(p if isinstance(p, PolynomialPiece) else PolynomialPiece(tuple(np.atleast_1d(p))))
    return tuple(out)


@dataclass(frozen=True)
class PC2Coefficient:
    """Non-negative finitely PC2 function ``a`` with polynomial pieces.

    Parameters
    ----------
    breakpoints : sequence of float
        Strictly increasing exceptional points ``t_1 < ... < t_K``.
    pieces : sequence
        ``K + 1`` coefficient lists (ascending powers) or
        :class:`PolynomialPiece` instances.
    working_range : (float, float), optional
        Interval on which non-negativity is verified.  Defaults to the
        breakpoint hull widened by one unit on each side.
    delta : float, optional
        Half-gap used by the indicator sets of the curvature terms.
    sigmas : sequence of float, optional
        Derivative jump magnitudes; recomputed from the pieces and checked
        when given.
    """

    breakpoints: tuple
    pieces: tuple
    working_range: tuple = None
    delta: float = None
    sigmas: tuple = field(default=None)

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.breakpoints, dtype=float))
        if t.ndim != 1:
            raise ValidationError("breakpoints must be a flat list")
        if not np.all(np.isfinite(t)):
            raise ValidationError("breakpoints must be finite")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValidationError("breakpoints must be strictly increasing")
        pieces = _as_pieces(self.pieces)
        if len(pieces) != t.size + 1:
            raise ValidationError(
                f"expected {t.size + 1} pieces for {t.size} breakpoints, got {len(pieces)}"
            )
        object.__setattr__(self, "breakpoints", tuple(float(v) for v in t))
        object.__setattr__(self, "pieces", pieces)

        for k, tk in enumerate(t, start=1):
            left, right = pieces[k - 1].value(tk), pieces[k].value(tk)
            if abs(left - right) > CONTINUITY_TOL * max(1.0, abs(left)):
                raise ValidationError(
                    f"pieces {k - 1} and {k} disagree at t_{k}={tk}: {left} vs {right}"
                )

        sig = tuple(
            float(abs(pieces[k - 1].deriv(tk) - pieces[k].deriv(tk)))
            for k, tk in enumerate(t, start=1)
        )
        if self.sigmas is not None:
            given = np.asarray(self.sigmas, dtype=float)
            if given.shape != (t.size,) or not np.array_equal(given, np.asarray(sig)):
                raise ValidationError(f"sigmas {list(given)} do not match pieces {list(sig)}")
        object.__setattr__(self, "sigmas", sig)

        gaps = np.diff(t)
        max_delta = float(gaps.min() / 2) if gaps.size else np.inf
        if self.delta is None:
            delta = max_delta if np.isfinite(max_delta) else 1.0
        else:
            delta = float(self.delta)
            if not delta > 0:
                raise ValidationError("delta must be positive")
            if delta > max_delta:
                raise ValidationError(f"delta {delta} exceeds half the smallest gap {max_delta}")
        object.__setattr__(self, "delta", delta)

        if self.working_range is None:
            lo = (t.min() if t.size else 0.0) - 1.0
            hi = (t.max() if t.size else 0.0) + 1.0
        else:
            lo, hi = (float(v) for v in self.working_range)
            if not lo < hi:
                raise ValidationError("working_range must satisfy lo < hi")
        object.__setattr__(self, "working_range", (float(lo), float(hi)))
        self._check_nonnegative()

    # -- structure ---------------------------------------------------------

    @property
    def K(self):
        return len(self.breakpoints)

    @property
    def exceptional_set(self):
        return frozenset(self.breakpoints)

    def piece_index(self, t):
        """Index ``i`` of the piece active at ``t`` (``t in (t_i, t_{i+1}]``)."""
        return np.searchsorted(np.asarray(self.breakpoints), t, side="left")

    def is_exceptional(self, t):
        t = np.asarray(t, dtype=float)
        bp = np.asarray(self.breakpoints)
        if bp.size == 0:
            return np.zeros(t.shape, dtype=bool)
        return np.isin(t, bp)

    def one_sided_slopes(self, k):
        """``(a'_{k-1}(t_k), a'_k(t_k))`` for breakpoint index ``1 <= k <= K``."""
        tk = self.breakpoints[k - 1]
        return float(self.pieces[k - 1].deriv(tk)), float(self.pieces[k].deriv(tk))

    # -- evaluation ----------------------------------------------------------

    def _piecewise(self, t, method):
        t = np.asarray(t, dtype=float)
        idx = self.piece_index(t)
        out = np.empty(t.shape, dtype=float)
        for i, piece in enumerate(self.pieces):
            mask = idx == i
            if np.any(mask):
                out[mask] = getattr(piece, method)(t[mask])
        return out if out.ndim else float(out)

    def eval(self, t):
        return self._piecewise(t, "value")

    __call__ = eval

    def dir_deriv(self, t, h):
        """Directional derivative ``a'(t; h)``."""
        t, h = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(h, dtype=float))
        idx = np.asarray(self.piece_index(t))
        at_bp = np.asarray(self.is_exceptional(t))
        # at t = t_{i+1} the active piece is i; moving right uses piece i + 1
        idx = np.where(at_bp & (h > 0), idx + 1, idx)
        slope = np.empty(t.shape, dtype=float)
        for i, piece in enumerate(self.pieces):
            mask = idx == i
            if np.any(mask):
                slope[mask] = piece.deriv(t[mask])
        out = np.where(h == 0, 0.0, slope * h)
        return out if out.ndim else float(out)

    def deriv_off_exceptional(self, t):
        """``1_{t not in E_a} a'(t)``."""
        out = np.where(self.is_exceptional(t), 0.0, self._piecewise(t, "deriv"))
        return out if out.ndim else float(out)

    def second_deriv(self, t):
        """``1_{t not in E_a} a''(t)``."""
        out = np.where(self.is_exceptional(t), 0.0, self._piecewise(t, "deriv2"))
        return out if out.ndim else float(out)

    def antiderivative(self, t):
        """``int_0^t a(s) ds``, exact across breakpoints."""
        t = np.asarray(t, dtype=float)
        idx = self.piece_index(t)
        offsets = self._primitive_offsets()
        out = np.empty(t.shape, dtype=float)
        for i, piece in enumerate(self.pieces):
            mask = idx == i
            if np.any(mask):
                out[mask] = piece.primitive(t[mask]) + offsets[i]
        return out if out.ndim else float(out)

    def _primitive_offsets(self):
        # offsets c_i with int_0^t a = P_i(t) + c_i on piece i, P_i(0) = 0
        cached = self.__dict__.get("_offsets")
        if cached is not None:
            return cached
        K, bp, pcs = self.K, self.breakpoints, self.pieces
        i0 = int(self.piece_index(0.0))
        c = np.zeros(K + 1)
        for i in range(i0 + 1, K + 1):
            tk = bp[i - 1]
            c[i] = pcs[i - 1].primitive(tk) + c[i - 1] - pcs[i].primitive(tk)
        for i in range(i0 - 1, -1, -1):
            tk = bp[i]
            c[i] = pcs[i + 1].primitive(tk) + c[i + 1] - pcs[i].primitive(tk)
        object.__setattr__(self, "_offsets", c)
        return c

    def index_sets(self, y_min, y_max):
        """Piece indices met by ``[y_min, y_max]`` and breakpoints inside it.

        Returns ``(I_y, I_y_plus)``; breakpoint indices run from 1 to K.
        """
        if y_min > y_max:
            raise ValidationError("index_sets needs y_min <= y_max")
        t = (-np.inf,) + self.breakpoints + (np.inf,)
        I_y = {i for i in range(self.K + 1) if t[i] < y_max and t[i + 1] >= y_min}
        I_plus = {k for k in range(1, self.K + 1) if y_min <= t[k] <= y_max}
        return I_y, I_plus

    # -- validation ----------------------------------------------------------

    def _check_nonnegative(self):
        lo, hi = self.working_range
        samples = [np.linspace(lo, hi, 2001), np.asarray(self.breakpoints)]
        t_ext = (-np.inf,) + self.breakpoints + (np.inf,)
        for i, piece in enumerate(self.pieces):
            a, b = max(lo, t_ext[i]), min(hi, t_ext[i + 1])
            if a > b:
                continue
            d = npoly.polyder(piece.coeffs)
            d = npoly.polytrim(d, 1e-14 * float(np.max(np.abs(d), initial=0.0)))
            if np.any(d != 0):
                roots = npoly.polyroots(d)
                real = roots[np.abs(roots.imag) < 1e-10].real
                samples.append(real[(real >= a) & (real <= b)])
        pts = np.concatenate(samples)
        pts = pts[(pts >= lo) & (pts <= hi)]
        vals = self.eval(pts)
        scale = max(1.0, float(np.max(np.abs(vals)))) if vals.size else 1.0
        if vals.size and vals.min() < -1e-12 * scale:
            k = int(np.argmin(vals))
            raise ValidationError(
                f"coefficient is negative on the working range: a({pts[k]:.6g}) = {vals[k]:.3e}"
            )

    # -- serialization -------------------------------------------------------

    def to_dict(self):
        return {
            "breakpoints": list(self.breakpoints),
            "pieces": [list(p.coeffs) for p in self.pieces],
            "working_range": list(self.working_range),
            "delta": self.delta,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            breakpoints=tuple(data.get("breakpoints", ())),
            pieces=tuple(tuple(p) for p in data["pieces"]),
            working_range=tuple(data["working_range"]) if data.get("working_range") else None,
            delta=data.get("delta"),
        )

    # -- common constructors -------------------------------------------------

    @classmethod
    def zero(cls, **kw):
        return cls((), ((0.0,),), **kw)

    @classmethod
    def abs_shifted(cls, center=0.0, **kw):
        """``|t - center|``."""
        return cls((center,), ((center, -1.0), (-center, 1.0)), **kw)

    @classmethod
    def relu_shifted(cls, center=0.0, slope=1.0, **kw):
        """``slope * max(0, t - center)``."""
        return cls((center,), ((0.0,), (-slope * center, slope)), **kw)
