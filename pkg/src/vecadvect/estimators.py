"""scikit-learn style wrappers: the spectral transport map and the Monte Carlo estimator."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from . import fields as fl
from . import fk, flows, pde
from .fields import VectorField
from .pde import SolverConfig, TimeDependentVelocity


def _velocity(spec, grid):
    if spec is None:
        return TimeDependentVelocity.frozen(VectorField.zeros(grid))
    if isinstance(spec, str):
        return TimeDependentVelocity.frozen(fl.analytic_field(spec, grid))
    return pde.as_velocity(spec)


class TransportOperator(BaseEstimator, TransformerMixin):
    """F0 -> F(T) for the F-equation (or the G-equation with equation="G").

    fit only binds the velocity to the grid of the first sample; transform accepts
    a VectorField, a list of them, or an array (n, dim, *sizes).
    """

    def __init__(self, velocity=None, nu: float = 0.1, T: float = 0.5, dt: float = 1e-3,
                 scheme: str = "IFRK4", equation: str = "F"):
        self.velocity = velocity
        self.nu = nu
        self.T = T
        self.dt = dt
        self.scheme = scheme
        self.equation = equation

    def _first(self, X):
        if isinstance(X, VectorField):
            return X
        if isinstance(X, (list, tuple)):
            return X[0]
        raise TypeError("pass a VectorField or a list of them (arrays need a fitted grid)")

    def fit(self, X, y=None):
        if self.equation not in ("F", "G"):
            raise ValueError(f"equation must be 'F' or 'G', got {self.equation!r}")
        self.grid_ = self._first(X).grid
        self.velocity_ = _velocity(self.velocity, self.grid_)
        self.cfg_ = SolverConfig(self.nu, self.dt, self.scheme)
        return self

    def _one(self, f: VectorField) -> VectorField:
        solve = pde.solve_F if self.equation == "F" else pde.solve_G
        return solve(f, self.velocity_, None, self.T, self.cfg_).final

    def transform(self, X):
        if not hasattr(self, "grid_"):
            raise NotFittedError("TransportOperator is not fitted")
        if isinstance(X, VectorField):
            return self._one(X)
        if isinstance(X, (list, tuple)):
            return [self._one(f) for f in X]
        arr = np.asarray(X, dtype=float)
        return np.stack([self._one(VectorField(self.grid_, a)).components for a in arr])


class FeynmanKacEstimator(BaseEstimator):
    """Monte Carlo F(s) from F0 by one of the path representations.

    representation: "curve" (any rotation), "rot2d" (drift-free rotated flow) or "surface".
    """

    def __init__(self, velocity=None, nu: float = 0.1, T: float = 0.5, s: float = 0.25, dt: float = 5e-3,
                 n_paths: int = 1000, seed: int = 0, representation: str = "curve", crn: bool = False):
        self.velocity = velocity
        self.nu = nu
        self.T = T
        self.s = s
        self.dt = dt
        self.n_paths = n_paths
        self.seed = seed
        self.representation = representation
        self.crn = crn

    def fit(self, X, y=None):
        F0 = X
        v = _velocity(self.velocity, F0.grid)
        cfg = flows.FlowConfig(self.nu, self.dt, self.n_paths, self.seed)
        if self.representation == "curve":
            est = fk.fk_curve(F0, v, self.nu, self.T, self.s, cfg, crn=self.crn)
        elif self.representation == "rot2d":
            phi = flows.stream_function(v.at(0.0))
            est = fk.fk_rot2d(F0, phi, self.nu, self.T, self.s, cfg, crn=self.crn)
        elif self.representation == "surface":
            est = fk.fk_surface(F0, v, self.nu, self.T, self.s, cfg, crn=self.crn)
        else:
            raise ValueError(f"unknown representation {self.representation!r}")
        self.estimate_ = est
        self.field_ = est.field
        self.stderr_ = est.stderr
        return self

    def predict(self, points):
        """Spectral interpolation of the estimated field at arbitrary points."""
        if not hasattr(self, "field_"):
            raise NotFittedError("FeynmanKacEstimator is not fitted")
        return fl.evaluate_at(self.field_, points)

    def score(self, X, y=None):
        """Negative relative H-norm gap to a reference field X."""
        if not hasattr(self, "field_"):
            raise NotFittedError("FeynmanKacEstimator is not fitted")
        return -fk.compare(self.estimate_, X).gap
