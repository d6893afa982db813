import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from pcq import ControlToState, OptimalControl, PC2Coefficient
from pcq.exceptions import ValidationError

from oracles import dense_lq, pdas

ABS = {"breakpoints": [0.0], "pieces": [[0.0, -1.0], [0.0, 1.0]], "working_range": [-5, 5]}


def test_control_to_state_poisson():
    est = ControlToState(resolution=128, coefficient={"breakpoints": [], "pieces": [[0.0]]}).fit()
    x = est.spec_.mesh.nodes[:, 0]
    U = np.vstack([np.pi**2 * np.sin(np.pi * x), 4 * np.pi**2 * np.sin(2 * np.pi * x)])
    Y = est.transform(U)
    assert Y.shape == U.shape
    assert np.abs(Y[0] - np.sin(np.pi * x)).max() < 1e-4
    assert np.abs(Y[1] - np.sin(2 * np.pi * x)).max() < 1e-3


def test_control_to_state_1d_input_and_methods():
    kw = dict(dim=2, resolution=8, coefficient=ABS, b=2.0)
    picard = ControlToState(**kw).fit()
    kirch = ControlToState(method="kirchhoff", **kw).fit()
    u = np.linspace(-20, 40, picard.n_features_in_)
    a, b = picard.transform(u), kirch.transform(u)
    assert a.shape == (1, 81)
    assert np.abs(a - b).max() <= 1e-10 * np.abs(a).max()


def test_params_and_clone():
    est = ControlToState(resolution=16, coefficient=ABS)
    params = est.get_params()
    assert params["resolution"] == 16 and params["method"] == "picard"
    est.set_params(resolution=8)
    cloned = clone(est)
    assert cloned.get_params()["resolution"] == 8 and not hasattr(cloned, "spec_")
    assert OptimalControl(nu=0.5).get_params()["nu"] == 0.5


def test_not_fitted():
    with pytest.raises(NotFittedError):
        ControlToState(coefficient=ABS).transform(np.zeros((1, 65)))
    with pytest.raises(NotFittedError):
        OptimalControl(coefficient=ABS).predict()


def test_shape_validation():
    est = ControlToState(resolution=8, coefficient=ABS).fit()
    with pytest.raises((ValueError, ValidationError)):
        est.transform(np.zeros((2, 5)))
    with pytest.raises((ValueError, ValidationError)):
        est.transform(np.full((1, 9), np.nan))


def test_coefficient_object_or_dict():
    obj = PC2Coefficient([0.0], [[0.0, -1.0], [0.0, 1.0]], working_range=(-5, 5))
    u = np.linspace(0, 30, 17)
    a = ControlToState(resolution=16, coefficient=obj).fit().transform(u)
    b = ControlToState(resolution=16, coefficient=ABS).fit().transform(u)
    assert np.array_equal(a, b)


def test_optimal_control_matches_dense_oracle():
    n = 24
    est = OptimalControl(resolution=n, coefficient={"breakpoints": [], "pieces": [[0.0]]},
                         nu=1e-2, alpha=-1.0, beta=1.0, tol=1e-10, max_iter=5000)
    x = np.linspace(0, 1, n + 1)
    y_d = 0.3 * np.sin(2 * np.pi * x) + 0.2
    est.fit(y_d)
    lq = dense_lq(x, np.ones(n + 1), 1e-2, y_d, -1.0, 1.0)
    u_star = pdas(lq)
    assert np.abs(est.u_ - u_star).max() <= 1e-6
    assert est.report_.converged and est.foc_residual_ <= 1e-10
    assert np.array_equal(est.predict(), est.y_)
    assert est.score() == pytest.approx(-lq["j"](u_star), rel=1e-8)
    assert est.score(y_d[None, :]) == pytest.approx(est.score())
    assert est.score(np.zeros((1, n + 1))) != est.score()


def test_optimal_control_zero_target():
    est = OptimalControl(resolution=16, coefficient=ABS, nu=1e-2).fit()
    assert np.abs(est.u_).max() == 0.0 and est.score() == 0.0


def test_optimal_control_rejects_bad_input():
    with pytest.raises((ValueError, ValidationError)):
        OptimalControl(resolution=8, coefficient=ABS, nu=0.0).fit()
    with pytest.raises(ValueError):
        OptimalControl(resolution=8, coefficient=ABS).fit(np.zeros((2, 9)))
