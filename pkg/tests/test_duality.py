import numpy as np

from vecadvect import duality as du, fields as fl
from vecadvect.fields import Grid
from vecadvect.pde import SolverConfig


def _setup(rng, n=8):
    g = Grid.cube(3, n)
    return g, fl.abc_flow(g), fl.random_solenoidal(g, rng, kmax=2), fl.random_solenoidal(g, rng, kmax=2)


def test_pairing_conserved(rng):
    g, v, F0, G0 = _setup(rng)
    rep = du.pairing_trace(F0, G0, v, 0.3, SolverConfig(0.05, 2e-3), 6)
    assert len(rep.pairings) == 6
    assert rep.deviation < 1e-6


def test_duality_relation(rng):
    g, v, F0, G0 = _setup(rng)
    left, right = du.duality_relation(F0, G0, v, 0.3, SolverConfig(0.05, 2e-3))
    assert du.rel_gap(left, right) < 1e-6


def test_checkpoint_steps():
    steps = du.checkpoint_steps(500, 10)
    assert len(steps) == 10 and steps[0] == 0 and steps[-1] == 500
    assert steps == sorted(set(steps))


def test_scaling_roundtrip_exact(rng):
    g = Grid.cube(3, 16)
    u = fl.random_solenoidal(g, rng, kmax=2)
    back = du.scaling_transform(du.scaling_transform(u, 0.5), 2.0)
    assert np.array_equal(back.components, u.components)


def test_helicity_of_abc(rng):
    g = Grid.cube(3, 16)
    v = fl.abc_flow(g)
    # Beltrami: helicity equals |v|^2
    assert abs(du.helicity(v) - fl.norm_H(v) ** 2) < 1e-8 * fl.norm_H(v) ** 2
