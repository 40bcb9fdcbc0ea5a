import numpy as np
import pytest

from vecadvect import fields as fl
from vecadvect.fields import Grid, ScalarField, VectorField


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(4, (8,) * 4, (1.0,) * 4)
    with pytest.raises(ValueError):
        Grid(2, (9, 8), (1.0, 1.0))
    with pytest.raises(ValueError):
        Grid(2, (8, 8), (1.0, -1.0))


def test_projection_idempotent_and_self_adjoint(grid3, rng):
    f = VectorField(grid3, rng.standard_normal((3,) + grid3.sizes))
    h = VectorField(grid3, rng.standard_normal((3,) + grid3.sizes))
    pf = fl.helmholtz_project(f)
    assert fl.norm_H(fl.helmholtz_project(pf) - pf) <= 1e-10 * fl.norm_H(pf)
    lhs = fl.inner_product_H(pf, h)
    rhs = fl.inner_product_H(f, fl.helmholtz_project(h))
    assert abs(lhs - rhs) <= 1e-10 * fl.norm_H(f) * fl.norm_H(h)
    assert np.max(np.abs(fl.divergence(pf).samples)) < 1e-10


def test_curl_of_gradient_vanishes(grid3, rng):
    phi = fl.random_scalar(grid3, rng, kmax=3)
    assert fl.curl(fl.gradient(phi)).max_abs() < 1e-10


def test_2d_curl_is_scalar(grid2):
    x, y = grid2.coords()
    w = fl.curl(VectorField(grid2, [-np.sin(y), np.sin(x)]))
    assert isinstance(w, ScalarField)
    assert np.allclose(w.samples, np.cos(x) + np.cos(y), atol=1e-12)


def test_curl_inverse_roundtrip(grid3, rng):
    u = fl.random_solenoidal(grid3, rng, kmax=3)
    assert fl.norm_H(fl.curl(fl.curl_inverse(u)) - u) < 1e-10 * fl.norm_H(u)


def test_taylor_green_is_solenoidal(grid2):
    v = fl.taylor_green_2d(grid2)
    assert np.max(np.abs(fl.divergence(v).samples)) < 1e-12


def test_abc_is_beltrami(grid3):
    v = fl.abc_flow(grid3)
    assert fl.norm_H(fl.curl(v) - v) < 1e-10


def test_evaluate_at_nodes_and_gradient(grid2, rng):
    f = fl.random_solenoidal(grid2, rng, kmax=3)
    pts = grid2.nodes()[:50]
    val, grad = fl.evaluate_at(f, pts, gradient=True)
    flat = f.components.reshape(2, -1).T[:50]
    assert np.allclose(val, flat, atol=1e-12)
    jac = fl.jacobian(f).reshape(2, 2, -1)[:, :, :50]
    assert np.allclose(grad, np.moveaxis(jac, -1, 0), atol=1e-10)


def test_random_solenoidal_normalised(grid3, rng):
    u = fl.random_solenoidal(grid3, rng, kmax=2)
    assert abs(np.sqrt(np.mean(u.components**2)) - 1) < 1e-12


def test_vector_field_rejects_nan(grid2):
    a = np.zeros((2,) + grid2.sizes)
    a[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        VectorField(grid2, a)


def test_unknown_recipe(grid2):
    with pytest.raises(ValueError):
        fl.analytic_field("nope", grid2)
