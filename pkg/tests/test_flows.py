import numpy as np
import pytest

from vecadvect import fields as fl, flows
from vecadvect.fields import Grid, VectorField
from vecadvect.flows import FlowConfig
from vecadvect.pde import NumericalGuardError


@pytest.fixture
def tg():
    g = Grid.cube(2, 16)
    return g, fl.taylor_green_2d(g)


def test_config_validation():
    with pytest.raises(ValueError):
        FlowConfig(0.0, 1e-2, 10)
    with pytest.raises(ValueError):
        FlowConfig(0.1, 1e-2, 0)
    with pytest.raises(ValueError):
        FlowConfig(0.1, 1e-2, 10, seed=2**64)
    with pytest.raises(ValueError):
        FlowConfig(0.1, 1e-2, 10, scheme="Milstein")


def test_stream_function_roundtrip(tg):
    g, v = tg
    phi = flows.stream_function(v)
    assert fl.norm_H(fl.perp_grad(phi) - v) < 1e-12
    x, y = g.coords()
    with pytest.raises(ValueError):
        flows.stream_function(VectorField(g, [np.sin(x), np.zeros_like(x)]))


def test_same_seed_bitwise(tg):
    g, v = tg
    cfg = FlowConfig(0.1, 1e-2, 64, seed=2**63 + 5)
    a = flows.simulate([[1.0, 2.0], [3.0, 0.5]], v, cfg, 0.0, 0.2)
    b = flows.simulate([[1.0, 2.0], [3.0, 0.5]], v, cfg, 0.0, 0.2)
    assert np.array_equal(a[1], b[1]) and np.array_equal(a[2], b[2])
    c = flows.simulate([[1.0, 2.0], [3.0, 0.5]], v, FlowConfig(0.1, 1e-2, 64, seed=6), 0.0, 0.2)
    assert not np.array_equal(a[1], c[1])


def test_path_offset_selects_paths(tg):
    g, v = tg
    cfg = FlowConfig(0.1, 1e-2, 8, seed=3)
    full = flows.simulate([[1.0, 2.0]], v, cfg, 0.0, 0.1)[1]
    tail = flows.simulate([[1.0, 2.0]], v, FlowConfig(0.1, 1e-2, 4, seed=3), 0.0, 0.1, path_offset=4)[1]
    assert np.array_equal(full[:, 4:], tail)


def test_stepwise_api_matches_simulate(tg):
    g, v = tg
    cfg = FlowConfig(0.1, 1e-2, 16, seed=9)
    pts = [[1.0, 2.0], [0.3, 5.0]]
    e = flows.FlowEnsemble.start_at(pts, 16)
    for _ in range(10):
        e = flows.step(e, v, cfg)
    _, pos, grads = flows.simulate(pts, v, cfg, 0.0, 0.1)
    assert np.array_equal(e.positions, pos[-1])
    assert np.array_equal(e.gradients, grads[-1])
    with pytest.raises(ValueError):
        flows.step_gradients(e, v, cfg)


def test_gradient_matches_finite_difference(tg):
    g, v = tg
    cfg = FlowConfig(0.1, 1e-2, 4, seed=1)
    x = np.array([1.0, 2.0])
    h = 1e-6
    pts = [x, x + [h, 0], x - [h, 0], x + [0, h], x - [0, h]]
    _, pos, grads = flows.simulate(pts, v, cfg, 0.0, 0.2)
    P = pos[-1]
    fd = np.stack([(P[:, 1] - P[:, 2]) / (2 * h), (P[:, 3] - P[:, 4]) / (2 * h)], axis=-1)
    assert np.max(np.abs(fd - grads[-1][:, 0])) < 1e-6


def test_drift_guard(tg):
    g, v = tg
    with pytest.raises(NumericalGuardError):
        flows.simulate([[1.0, 1.0]], v * 1e3, FlowConfig(0.1, 0.1, 4), 0.0, 0.2)


def test_contour_validation():
    with pytest.raises(ValueError):
        flows.Contour(np.zeros((8, 2)))
    pts = flows.Contour.circle([0, 0], 1.0, 32).points.copy()
    pts[1] = pts[0]
    with pytest.raises(ValueError):
        flows.Contour(pts)


def test_circulation_of_rotation_field():
    g = Grid.cube(2, 16)
    x, y = g.coords()
    # F = (-sin y, sin x) has rot F = cos x + cos y; small circle gives about pi r^2 rot F
    F = VectorField(g, [-np.sin(y), np.sin(x)])
    c = flows.Contour.circle([1.0, 2.0], 1e-2, 256)
    assert abs(flows.circulation(c.points, F) / (np.pi * 1e-4) - (np.cos(1.0) + np.cos(2.0))) < 1e-4


def test_correction_integrand_equals_advection_circulation(tg):
    g, v = tg
    F = fl.helmholtz_project(fl.random_solenoidal(g, np.random.default_rng(2), kmax=2))
    c = flows.Contour.circle([3.0, 3.0], 0.5, 512).points
    corr = flows.correction_term_integrand(c, F, flows.Rot2DBrownian(flows.stream_function(v)), 0.1)
    adv = flows.advection_circulation(c, F, v)
    # adv is the circulation of -(v x curl F); it cancels the drift of the projected equation
    assert abs(corr - adv) < 1e-4 * abs(adv)


def test_identity_has_no_correction(tg):
    g, v = tg
    c = flows.Contour.circle([3.0, 3.0], 0.5).points
    assert flows.correction_term_integrand(c, v, flows.Identity(), 0.1) == 0.0


def test_one_point_law_small():
    cfg = FlowConfig(0.5, 1e-2, 4000, seed=4, rotation=flows.Rot2DBrownian())
    g = Grid.cube(2, 16)
    x, y = g.coords()
    phi = fl.ScalarField(g, np.sin(x) * np.sin(y))
    rep = flows.one_point_law_test(cfg, 0.5, v=fl.perp_grad(phi))
    assert rep.passed, rep.to_dict()


def test_budget():
    flows.check_budget(1, 100)
    with pytest.raises(flows.FlowExplosionError):
        flows.check_budget(2, 100)


def test_se_slope():
    n = np.array([10, 100, 1000])
    assert abs(flows.se_slope(n, 3 / np.sqrt(n)) + 0.5) < 1e-12
