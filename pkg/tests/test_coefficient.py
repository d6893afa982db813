import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from pcq.coefficient import PC2Coefficient, PolynomialPiece
from pcq.exceptions import ValidationError

ABS = PC2Coefficient.abs_shifted(0.0)
RELU = PC2Coefficient.relu_shifted(0.0)
# t^2 + 1 on the left, 1 + t on the right: slopes 0 and 1 at t = 0
MIXED = PC2Coefficient([0.0], [[1.0, 0.0, 1.0], [1.0, 1.0]])


def random_coefficient(data):
    """Continuous non-negative PC2 coefficient built piece by piece."""
    K = data.draw(st.integers(0, 3))
    gaps = data.draw(st.lists(st.floats(0.2, 2.0), min_size=K, max_size=K))
    bps = np.cumsum([0.0] + gaps)[1:] - 1.0 if K else np.array([])
    pieces = []
    value = 2.5 + data.draw(st.floats(0, 2))
    slopes = data.draw(st.lists(st.floats(-0.2, 0.2), min_size=K + 1, max_size=K + 1))
    curv = data.draw(st.lists(st.floats(0, 0.2), min_size=K + 1, max_size=K + 1))
    # piece i is written around its left breakpoint s_i: c + m (t - s_i) + q (t - s_i)^2
    anchor = [bps[0] if K else 0.0] + list(bps)
    for i in range(K + 1):
        s = anchor[i]
        if i > 0:
            prev = pieces[-1]
            value = float(np.polynomial.polynomial.polyval(s, prev))
        m, q = slopes[i], curv[i]
        coeffs = [value - m * s + q * s * s, m - 2 * q * s, q]
        pieces.append(coeffs)
    return PC2Coefficient(tuple(bps), pieces, working_range=(-3.0, 3.0))


class TestSpecExamples:
    def test_eval(self):
        assert ABS.eval(0.5) == 0.5
        assert RELU.eval(-3.0) == 0.0
        assert ABS.eval(0.0) == 0.0
        assert ABS.piece_index(0.0) == 0

    def test_dir_deriv(self):
        assert ABS.dir_deriv(0.0, 1.0) == 1.0
        assert ABS.dir_deriv(0.0, -1.0) == 1.0
        assert ABS.dir_deriv(2.0, -3.0) == -3.0
        assert ABS.dir_deriv(0.0, 0.0) == 0.0

    def test_derivatives_off_exceptional(self):
        assert ABS.deriv_off_exceptional(0.0) == 0.0
        assert ABS.deriv_off_exceptional(-0.5) == -1.0
        c = PC2Coefficient([0.0], [[0.0], [0.0, 0.0, 1.0]])
        assert c.second_deriv(0.3) == pytest.approx(2.0)
        assert c.second_deriv(0.0) == 0.0

    def test_antiderivative(self):
        assert ABS.antiderivative(2.0) == pytest.approx(2.0)
        assert ABS.antiderivative(-2.0) == pytest.approx(-2.0)
        assert PC2Coefficient.zero().antiderivative(7.3) == 0.0

    def test_index_sets(self):
        c = PC2Coefficient.abs_shifted(0.5)
        assert c.index_sets(0.2, 0.8) == ({0, 1}, {1})
        assert c.index_sets(0.6, 0.8) == ({1}, set())
        assert c.index_sets(0.2, 0.5)[1] == {1}
        with pytest.raises(ValidationError):
            c.index_sets(1.0, 0.0)

    def test_sigma_and_slopes(self):
        assert ABS.sigmas == (2.0,)
        assert MIXED.sigmas == (1.0,)
        assert MIXED.one_sided_slopes(1) == (0.0, 1.0)
        assert PC2Coefficient.zero().sigmas == ()


class TestValidation:
    def test_degree(self):
        with pytest.raises(ValidationError):
            PolynomialPiece((1, 0, 0, 0, 0, 1))
        assert PolynomialPiece((1, 0, 0, 0, 1)).degree == 4

    def test_breakpoints_increasing(self):
        with pytest.raises(ValidationError):
            PC2Coefficient([0.5, 0.2], [[1], [1], [1]])

    def test_piece_count(self):
        with pytest.raises(ValidationError, match="pieces"):
            PC2Coefficient([0.0], [[1.0]])

    def test_discontinuity(self):
        with pytest.raises(ValidationError, match="disagree"):
            PC2Coefficient([0.0], [[1.0], [2.0]])

    def test_negative(self):
        with pytest.raises(ValidationError, match="negative"):
            PC2Coefficient([0.0], [[0.0, 1.0], [0.0, 1.0]], working_range=(-1, 1))

    def test_negative_interior_minimum(self):
        # (t - 0.3)^2 - 0.01 dips below zero between samples only at its vertex
        with pytest.raises(ValidationError):
            PC2Coefficient([], [[0.08, -0.6, 1.0]], working_range=(0, 1))

    def test_sigma_mismatch(self):
        with pytest.raises(ValidationError):
            PC2Coefficient([0.0], [[0, -1], [0, 1]], sigmas=[1.0])
        PC2Coefficient([0.0], [[0, -1], [0, 1]], sigmas=[2.0])

    def test_delta(self):
        c = PC2Coefficient([0.0, 1.0], [[1, -1], [1, 0], [0, 1]])
        assert c.delta == 0.5
        with pytest.raises(ValidationError):
            PC2Coefficient([0.0, 1.0], [[1, -1], [1, 0], [0, 1]], delta=0.6)
        with pytest.raises(ValidationError):
            PC2Coefficient([0.0], [[0, -1], [0, 1]], delta=0.0)
        assert ABS.delta == 1.0

    def test_round_trip(self):
        c = PC2Coefficient([0.1, 0.4], [[0.5, -1], [0.3, 1], [1.1, -1]], working_range=(-1, 1))
        c2 = PC2Coefficient.from_dict(c.to_dict())
        assert c2 == c


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_continuity_and_antiderivative(data):
    c = random_coefficient(data)
    for t in c.breakpoints:
        assert abs(c.eval(t) - c.eval(np.nextafter(t, np.inf))) < 1e-9
    x = data.draw(st.floats(-2.9, 2.9))
    ref, _ = quad(c.eval, 0.0, x, points=[t for t in c.breakpoints if min(0, x) < t < max(0, x)] or None)
    assert c.antiderivative(x) == pytest.approx(ref, abs=1e-10, rel=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.data(), st.floats(-2.9, 2.9), st.floats(-3, 3), st.floats(0.01, 10))
def test_dir_deriv_homogeneous_and_one_sided(data, t, h, lam):
    c = random_coefficient(data)
    # positive homogeneity in the direction
    assert c.dir_deriv(t, lam * h) == pytest.approx(lam * c.dir_deriv(t, h), rel=1e-12, abs=1e-15)
    # one-sided difference quotient oracle
    eps = 1e-7
    fd = (c.eval(t + eps * h) - c.eval(t)) / eps
    assert c.dir_deriv(t, h) == pytest.approx(fd, abs=1e-5 * max(1, abs(h)))


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_dir_deriv_at_breakpoints(data):
    c = random_coefficient(data)
    for k, t in enumerate(c.breakpoints, start=1):
        left, right = c.one_sided_slopes(k)
        assert c.dir_deriv(t, 1.0) == pytest.approx(right)
        assert c.dir_deriv(t, -1.0) == pytest.approx(-left)
        assert c.sigmas[k - 1] == pytest.approx(abs(left - right))
        assert c.deriv_off_exceptional(t) == 0.0


def test_vectorized_matches_scalar():
    t = np.linspace(-2, 2, 41)
    vals = MIXED.eval(t)
    assert vals.shape == t.shape
    assert np.allclose(vals, [MIXED.eval(float(s)) for s in t])
