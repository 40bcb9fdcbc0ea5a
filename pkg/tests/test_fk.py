import numpy as np
import pytest

from vecadvect import fields as fl, fk, flows
from vecadvect.fields import Grid, VectorField
from vecadvect.flows import FlowConfig


@pytest.fixture(scope="module")
def setup():
    g = Grid.cube(2, 16)
    x, y = g.coords()
    F0 = fl.helmholtz_project(VectorField(g, [np.sin(2 * y) + 0.5 * np.cos(x + y), np.cos(x)]))
    v = fl.taylor_green_2d(g)
    return g, v, F0, fk.pde_reference(F0, v, 0.1, 0.5, 0.2, 2e-3)


def test_s_zero_returns_initial(setup):
    g, v, F0, _ = setup
    est = fk.fk_curve(F0, v, 0.1, 0.5, 0.0, FlowConfig(0.1, 1e-2, 10))
    assert np.array_equal(est.raw.components, F0.components)
    assert np.allclose(est.field.components, F0.components, atol=1e-14)
    assert est.se_norm() == 0.0


def test_curve_agrees_with_pde(setup):
    g, v, F0, ref = setup
    est = fk.fk_curve(F0, v, 0.1, 0.5, 0.2, FlowConfig(0.1, 1e-2, 1000, seed=11))
    c = fk.compare(est, ref, floor=0.0, n_se=4)
    assert c.passed, c


def test_rot2d_agrees_with_pde(setup):
    g, v, F0, ref = setup
    est = fk.fk_rot2d(F0, flows.stream_function(v), 0.1, 0.5, 0.2, FlowConfig(0.1, 1e-2, 1000, seed=12))
    c = fk.compare(est, ref, floor=0.0, n_se=4)
    assert c.passed, c


def test_complex_form_pathwise(setup):
    g, v, F0, _ = setup
    r = fk.fk_complex_check(F0, flows.stream_function(v), 0.1, 0.5, 0.2, FlowConfig(0.1, 1e-2, 50, seed=1),
                            nodes=np.arange(0, g.n_points, 8))
    assert r["passed"], r
    assert r["max_state_gap"] < 1e-10


def test_crn_gives_identical_nodes_same_noise(setup):
    g, v, F0, _ = setup
    cfg = FlowConfig(0.1, 1e-2, 20, seed=3)
    a = fk.fk_curve(F0, v, 0.1, 0.5, 0.1, cfg, crn=True)
    b = fk.fk_curve(F0, v, 0.1, 0.5, 0.1, cfg, crn=True)
    assert np.array_equal(a.raw.components, b.raw.components)
    c = fk.fk_curve(F0, v, 0.1, 0.5, 0.1, cfg)
    assert not np.array_equal(a.raw.components, c.raw.components)


def test_surface_needs_solenoidal():
    g = Grid.cube(3, 8)
    x, y, z = g.coords()
    with pytest.raises(ValueError):
        fk.fk_surface(VectorField(g, [np.sin(x), 0 * x, 0 * x]), None, 0.1, 0.5, 0.1, FlowConfig(0.1, 1e-2, 4))


def test_surface_curl_consistency_small():
    g = Grid.cube(3, 8)
    G0 = fl.random_solenoidal(g, np.random.default_rng(3), kmax=1)
    r = fk.surface_curl_consistency(G0, fl.abc_flow(g, 0.5, 0.5, 0.5), 0.1, 0.5, 0.1,
                                    FlowConfig(0.1, 2e-2, 300, seed=4))
    assert r["passed"], {k: r[k] for k in ("gap", "se", "threshold")}


def test_curl_noise_norm_matches_sampling():
    # independent node noise with the stored SEs: compare the formula with direct draws
    g = Grid.cube(3, 8)
    rng = np.random.default_rng(0)
    se = rng.uniform(0.5, 1.5, (3,) + g.sizes)
    z = VectorField.zeros(g)
    est = fk.FkEstimate(z, z, se, 1, "x", 0)
    draws = [fl.norm_H(fl.curl(VectorField(g, se * rng.standard_normal(se.shape)))) ** 2 for _ in range(200)]
    assert abs(np.mean(draws) / fk.curl_noise_norm(est) ** 2 - 1) < 0.03


def test_compare_threshold():
    g = Grid.cube(2, 8)
    x, y = g.coords()
    ref = VectorField(g, [np.sin(y), np.zeros_like(x)])
    est = fk.FkEstimate(ref * 1.01, ref, np.zeros((2,) + g.sizes), 1, "x", 0)
    c = fk.compare(est, ref)
    assert abs(c.gap - 0.01) < 1e-12 and c.passed
    assert not fk.compare(est, ref, floor=0.005).passed
