import numpy as np
import pytest

from vecadvect import fields as fl, so3
from vecadvect.fields import Grid


def test_hat_vee(rng):
    a = rng.standard_normal(3)
    A = so3.hat(a)
    assert np.array_equal(A, -A.T)
    assert np.array_equal(so3.vee(A), a)


def test_hat_is_cross(rng):
    a, x = rng.standard_normal((2, 3))
    assert np.allclose(so3.hat(a) @ x, np.cross(a, x), atol=1e-15)


def test_exp_orthogonal_and_series(rng):
    for _ in range(20):
        a = rng.standard_normal(3)
        a *= rng.uniform(0, 3) / np.linalg.norm(a)
        R = so3.exp_so3(a)
        assert np.allclose(R.T @ R, np.eye(3), atol=1e-14)
        assert abs(np.linalg.det(R) - 1) < 1e-14
        assert np.max(np.abs(R - so3.exp_series(a))) < 1e-12


def test_exp_small_angle():
    a = np.array([1e-10, 0, 0])
    assert np.allclose(so3.exp_so3(a), np.eye(3) + so3.hat(a), atol=1e-20)


def test_log_inverts_exp(rng):
    a = rng.standard_normal(3)
    a *= 2.5 / np.linalg.norm(a)
    assert np.allclose(so3.log_so3(so3.exp_so3(a)), a, atol=1e-12)


def test_bch_matches_product(rng):
    for _ in range(50):
        u, v = rng.uniform(-1, 1, (2, 3)) / np.sqrt(3)
        w = so3.bch(u, v)
        assert np.max(np.abs(w - so3.log_so3(so3.exp_so3(u) @ so3.exp_so3(v)))) < 1e-8


def test_bch_branch_error():
    with pytest.raises(so3.BranchError):
        so3.bch(np.array([3.2, 0, 0]), np.zeros(3))


def test_correction_pure_planar_rotation():
    a = np.array([[0.0, 0.0, 1.3]])
    da = np.array([[0.0, 0.0, 0.7]])
    assert np.allclose(so3.correction_from_derivative(a, da), [[0, 0, 0.7]], atol=1e-15)


def test_correction_matches_rewritten(rng):
    for _ in range(20):
        a, da = rng.standard_normal((2, 3))
        lhs = so3.hat(so3.correction_from_derivative(a, da)[0])
        assert np.max(np.abs(lhs - so3.correction_rewritten(a, da))) < 1e-12


def test_self_check():
    r = so3.self_check(0, n_exp=50, n_pairs=200, n_fields=20)
    assert r["passed"], r


def test_trivial_representation_residual():
    g = Grid.cube(3, 8)
    b = np.zeros((3,) + g.sizes)
    b[2] = 1
    zero = fl.ScalarField(g, np.zeros(g.sizes))
    F = fl.random_solenoidal(g, np.random.default_rng(0))
    r = so3.representation_residual(fl.VectorField(g, b), zero, zero, fl.VectorField.zeros(g), F, 0.1)
    assert r.max_abs() == 0.0


def test_embedded_triple_residual(rng):
    g = Grid.cube(2, 16)
    b, phi, psi, v = so3.embedded_triple(fl.random_scalar(g, rng, kmax=3), 0.2)
    F = fl.embed_2d(fl.random_solenoidal(g, rng, kmax=3))
    assert so3.representation_residual(b, phi, psi, v, F, 0.2).max_abs() < 1e-10
    # residual grows linearly in a perturbation of phi
    x = v.grid.coords()[0]
    r1 = so3.representation_residual(b, phi + 1e-3 * np.sin(x), psi, v, F, 0.2).max_abs()
    r2 = so3.representation_residual(b, phi + 2e-3 * np.sin(x), psi, v, F, 0.2).max_abs()
    assert abs(r2 / r1 - 2) < 1e-6


def test_non_unit_b_rejected():
    g = Grid.cube(3, 8)
    zero = fl.ScalarField(g, np.zeros(g.sizes))
    with pytest.raises(ValueError):
        so3.representation_residual(fl.VectorField.zeros(g), zero, zero, fl.VectorField.zeros(g),
                                    fl.VectorField.zeros(g), 0.1)


def test_flat_connection_from_rotation_field():
    # the connection is not band-limited; 32^3 resolves wavenumber-1 fields to round-off
    g = Grid.cube(3, 32)
    field = so3.RotationField.random_trig(np.random.default_rng(5), n_terms=2, scale=0.5, kmax=1)
    A = so3.ConnectionOneForm.from_rotation_field(field, g)
    assert np.max(np.abs(so3.flat_connection_residual(A))) < 1e-8
    assert np.max(np.abs(so3.flat_connection_residual(so3.ConnectionOneForm.zeros(g)))) == 0
