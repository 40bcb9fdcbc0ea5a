import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from vecadvect import fields as fl, fk, pde
from vecadvect.estimators import FeynmanKacEstimator, TransportOperator
from vecadvect.fields import Grid
from vecadvect.pde import SolverConfig


def test_transport_matches_solver(rng):
    g = Grid.cube(3, 8)
    F0 = fl.random_solenoidal(g, rng, kmax=2)
    v = fl.abc_flow(g, 0.5, 0.5, 0.5)
    op = TransportOperator(velocity=v, nu=0.1, T=0.1, dt=1e-2).fit([F0])
    out = op.transform(F0)
    ref = pde.solve_F(F0, v, None, 0.1, SolverConfig(0.1, 1e-2)).final
    assert np.array_equal(out.components, ref.components)
    arr = op.transform(np.stack([F0.components, F0.components]))
    assert arr.shape == (2, 3) + g.sizes
    assert np.array_equal(arr[1], ref.components)


def test_params_and_clone():
    op = TransportOperator(nu=0.3, equation="G")
    assert clone(op).get_params()["nu"] == 0.3
    est = FeynmanKacEstimator(n_paths=7).set_params(seed=5)
    assert est.get_params()["seed"] == 5


def test_not_fitted():
    with pytest.raises(NotFittedError):
        TransportOperator().transform([])
    with pytest.raises(NotFittedError):
        FeynmanKacEstimator().predict(np.zeros((1, 2)))


def test_bad_equation(rng):
    with pytest.raises(ValueError):
        TransportOperator(equation="H").fit(fl.random_solenoidal(Grid.cube(2, 8), rng))


def test_fk_estimator_fit_predict_score():
    g = Grid.cube(2, 16)
    x, y = g.coords()
    F0 = fl.helmholtz_project(fl.VectorField(g, [np.sin(y), np.cos(x)]))
    est = FeynmanKacEstimator(velocity="taylor_green_2d", nu=0.1, T=0.2, s=0.1, dt=1e-2, n_paths=200, seed=1)
    est.fit(F0)
    assert est.field_.grid == g
    vals = est.predict(g.nodes()[:3])
    assert np.allclose(vals, est.field_.components.reshape(2, -1).T[:3], atol=1e-12)
    ref = fk.pde_reference(F0, fl.taylor_green_2d(g), 0.1, 0.2, 0.1)
    assert -est.score(ref) < 0.05
