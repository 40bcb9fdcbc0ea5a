import math

import numpy as np
import pytest

from vecadvect import fields as fl, pde
from vecadvect.fields import VectorField
from vecadvect.pde import NumericalGuardError, SolverConfig


def test_n_steps_for():
    assert pde.n_steps_for(0.5, 1e-3) == 500
    assert pde.n_steps_for(0.5, 0.3) == 2
    assert pde.n_steps_for(0.0, 0.1) == 0


def test_zero_velocity_is_heat(grid3, rng):
    F0 = fl.random_solenoidal(grid3, rng, kmax=3)
    zero = VectorField.zeros(grid3)
    out = pde.solve_F(F0, zero, None, 0.3, SolverConfig(0.1, 1e-2)).final
    assert fl.norm_H(out - pde.heat(F0, 0.1, 0.3)) < 1e-12 * fl.norm_H(F0)


def test_single_mode_decay(grid2):
    x, y = grid2.coords()
    F0 = VectorField(grid2, [np.sin(y), np.zeros_like(x)])
    out = pde.solve_F(F0, VectorField.zeros(grid2), None, 1.0, SolverConfig(0.2, 0.05)).final
    assert np.allclose(out.components[0], math.exp(-0.2) * np.sin(y), atol=1e-13)


def test_curl_intertwines_F_and_G(grid3, rng):
    v = pde.as_velocity(fl.abc_flow(grid3, 0.5, 0.5, 0.5))
    F0 = fl.random_solenoidal(grid3, rng, kmax=2)
    cfg = SolverConfig(0.1, 2e-3)
    F = pde.solve_F(F0, v, None, 0.2, cfg).final
    G = pde.solve_G(fl.curl(F0), pde.time_reverse(v, 0.2), None, 0.2, cfg).final
    assert fl.norm_H(fl.curl(F) - G) < 1e-8 * fl.norm_H(G)


def test_energy_inequality(grid2, rng):
    v = pde.as_velocity(fl.taylor_green_2d(grid2))
    F0 = fl.random_solenoidal(grid2, rng, kmax=3)
    cfg = SolverConfig(0.1, 5e-3)
    traj = pde.solve_F(F0, v, None, 0.5, cfg, record=list(range(101)))
    rep = pde.energy_diagnostics(traj, v, cfg)
    assert rep.inequality_holds
    assert rep.max_residual < 1e-6 * rep.energy[0]


def test_cfl_guard(grid2, rng):
    v = fl.taylor_green_2d(grid2, amplitude=100.0)
    with pytest.raises(NumericalGuardError):
        pde.solve_F(fl.random_solenoidal(grid2, rng), v, None, 0.1, SolverConfig(0.1, 0.05))


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(0.0, 1e-3)
    with pytest.raises(ValueError):
        SolverConfig(0.1, 1e-3, scheme="RK45")


def test_clock_reverse_samples(grid3):
    v = pde.TimeDependentVelocity.from_recipe("abc_flow", grid3, nu=0.1)
    r = pde.clock_reverse(v, 0.5)
    assert fl.norm_H(r.at(0.2) - v.at(0.3)) < 1e-12
