"""Spectral solver for the vector advection equation and its dual.

F-equation:  dF/dt = nu Lap F - B(v(t), F) + f(t),   B(v, F) = P(v x curl F)
G-equation:  dG/dt = nu Lap G + curl(v(T - t) x G) + f(t)

In 2D both nonlinear terms use first-order forms,
v x curl F -> (grad F)^T v - (v.grad)F and curl(v x G) -> (G.grad)v - (v.grad)G,
each followed by the Helmholtz projection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import fields as fl
from .fields import Grid, VectorField


class NumericalGuardError(RuntimeError):
    """A stability or validity guard tripped (CLI exit code 3)."""


@dataclass(frozen=True)
class SolverConfig:
    nu: float
    dt: float
    scheme: str = "IFRK4"
    dealias: bool = True

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"nu must be > 0, got {self.nu}")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.scheme not in ("IFRK4", "IFEuler"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


class TimeDependentVelocity:
    """Velocity v(t): either a callable t -> VectorField or uniform samples on [0, T]."""

    def __init__(self, grid: Grid, func: Optional[Callable] = None,
                 samples: Optional[Sequence[VectorField]] = None, T: Optional[float] = None,
                 label: str = ""):
        if (func is None) == (samples is None):
            raise ValueError("give exactly one of func or samples")
        self.grid = grid
        self.func = func
        self.label = label
        self.samples = None
        self.T = T
        if samples is not None:
            samples = list(samples)
            for s in samples:
                if s.grid != grid:
                    raise ValueError("sample grid mismatch")
                div = np.max(np.abs(fl.div_hat(fl._fft(s.components, grid), grid)))
                if div > 1e-10 * max(1.0, s.max_abs()):
                    raise ValueError(f"velocity sample not divergence-free (|div| = {div:.2e})")
            self.samples = samples
            if len(samples) > 1 and not (T and T > 0):
                raise ValueError("sampled velocity with more than one sample needs T > 0")
        self._hat_cache = {}

    @classmethod
    def frozen(cls, v: VectorField) -> "TimeDependentVelocity":
        return cls(v.grid, samples=[v], label="frozen")

    @classmethod
    def from_recipe(cls, recipe: str, grid: Grid, **params) -> "TimeDependentVelocity":
        fl.analytic_field(recipe, grid, 0.0, **params)
        return cls(grid, func=lambda t: fl.analytic_field(recipe, grid, t, **params), label=recipe)

    @property
    def is_frozen(self) -> bool:
        return self.samples is not None and len(self.samples) == 1

    @property
    def sample_times(self) -> Optional[np.ndarray]:
        if self.samples is None:
            return None
        if len(self.samples) == 1:
            return np.zeros(1)
        return np.linspace(0.0, self.T, len(self.samples))

    def _interp(self, t: float):
        n = len(self.samples)
        if n == 1:
            return 0, 0.0
        s = min(max(t / self.T * (n - 1), 0.0), n - 1.0)
        i = min(int(math.floor(s)), n - 2)
        return i, s - i

    def at(self, t: float) -> VectorField:
        if self.func is not None:
            return self.func(t)
        i, w = self._interp(t)
        if w == 0.0:
            return self.samples[i]
        return VectorField(self.grid, (1 - w) * self.samples[i].components + w * self.samples[i + 1].components)

    def hat(self, t: float) -> np.ndarray:
        """Spectral coefficients of v(t)."""
        if self.func is not None:
            key = float(t)
            if key not in self._hat_cache:
                if len(self._hat_cache) > 64:
                    self._hat_cache.clear()
                self._hat_cache[key] = fl._fft(self.func(t).components, self.grid)
            return self._hat_cache[key]
        i, w = self._interp(t)
        ci = self._sample_hat(i)
        if w == 0.0:
            return ci
        return (1 - w) * ci + w * self._sample_hat(i + 1)

    def _sample_hat(self, i: int) -> np.ndarray:
        if i not in self._hat_cache:
            self._hat_cache[i] = fl._fft(self.samples[i].components, self.grid)
        return self._hat_cache[i]

    def max_speed(self, times: Sequence[float]) -> float:
        if self.samples is not None:
            return max(s.max_abs() for s in self.samples)
        return max(self.at(t).max_abs() for t in times)

    def sampled(self, T: float, n: int) -> "TimeDependentVelocity":
        """Uniform samples of v on [0, T]."""
        if self.samples is not None:
            return self
        return TimeDependentVelocity(self.grid, samples=[self.at(t) for t in np.linspace(0, T, n)], T=T,
                                     label=self.label)


def time_reverse(v: TimeDependentVelocity, T: float) -> TimeDependentVelocity:
    """(S_T v)(t) = -v(T - t)."""
    if v.samples is not None:
        return TimeDependentVelocity(v.grid, samples=[-s for s in reversed(v.samples)], T=v.T,
                                     label=f"S[{v.label}]")
    func = v.func
    return TimeDependentVelocity(v.grid, func=lambda t: -func(T - t), label=f"S[{v.label}]")


def clock_reverse(v: TimeDependentVelocity, T: float) -> TimeDependentVelocity:
    """t -> v(T - t) (no sign change)."""
    if v.samples is not None:
        return TimeDependentVelocity(v.grid, samples=list(reversed(v.samples)), T=v.T, label=f"R[{v.label}]")
    func = v.func
    return TimeDependentVelocity(v.grid, func=lambda t: func(T - t), label=f"R[{v.label}]")


def as_velocity(v) -> TimeDependentVelocity:
    if isinstance(v, TimeDependentVelocity):
        return v
    if isinstance(v, VectorField):
        return TimeDependentVelocity.frozen(v)
    raise TypeError(f"cannot use {type(v).__name__} as a velocity")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n_snap, dim, *sizes)
    grid: Grid
    cfg: SolverConfig
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def field(self, i: int) -> VectorField:
        return VectorField(self.grid, self.states[i])

    @property
    def final(self) -> VectorField:
        return self.field(-1)

    def at(self, t: float) -> VectorField:
        i = int(np.searchsorted(self.times, t))
        if i < len(self.times) and abs(self.times[i] - t) <= 1e-12 * max(1.0, abs(t)):
            return self.field(i)
        if i > 0 and abs(self.times[i - 1] - t) <= 1e-12 * max(1.0, abs(t)):
            return self.field(i - 1)
        if i == 0 or i == len(self.times):
            raise ValueError(f"t = {t} outside trajectory [{self.times[0]}, {self.times[-1]}]")
        w = (t - self.times[i - 1]) / (self.times[i] - self.times[i - 1])
        return VectorField(self.grid, (1 - w) * self.states[i - 1] + w * self.states[i])

    def fields(self) -> list:
        return [self.field(i) for i in range(len(self))]


def n_steps_for(T: float, dt: float) -> int:
    return max(int(math.ceil(T / dt - 1e-9)), 0)


def _mask(grid: Grid, cfg: SolverConfig):
    return grid.dealias_mask if cfg.dealias else None


def _phys(c, grid, mask):
    return fl._ifft(c * mask if mask is not None else c, grid)


def _out(c, mask):
    return c * mask if mask is not None else c


def b_term_hat(vh: np.ndarray, Fh: np.ndarray, grid: Grid, form: str, mask=None) -> np.ndarray:
    """Spectral coefficients of B(v, F) = P(v x curl F)."""
    v = _phys(vh, grid, mask)
    if form == "cross" and grid.dim == 3:
        c = _phys(fl.curl_hat(Fh, grid), grid, mask)
        prod = fl.cross(v, c)
    else:
        gF = _phys(fl.grad_hat(Fh, grid), grid, mask)  # [i, a] = d_a F^i
        # ((grad F)^T v)_k = sum_j v^j d_k F^j ; ((v.grad)F)_k = sum_j v^j d_j F^k
        prod = np.stack([
            sum(v[j] * gF[j, k] for j in range(grid.dim)) - sum(v[j] * gF[k, j] for j in range(grid.dim))
            for k in range(grid.dim)
        ])
    return _out(fl.project_hat(fl._fft(prod, grid), grid), mask)


def g_term_hat(vh: np.ndarray, Gh: np.ndarray, grid: Grid, form: str, mask=None) -> np.ndarray:
    """Spectral coefficients of curl(v x G) (projected)."""
    if form == "cross" and grid.dim == 3:
        v = _phys(vh, grid, mask)
        G = _phys(Gh, grid, mask)
        return _out(fl.curl_hat(fl._fft(fl.cross(v, G), grid), grid), mask)
    v = _phys(vh, grid, mask)
    G = _phys(Gh, grid, mask)
    gv = _phys(fl.grad_hat(vh, grid), grid, mask)
    gG = _phys(fl.grad_hat(Gh, grid), grid, mask)
    prod = np.stack([
        sum(G[j] * gv[k, j] for j in range(grid.dim)) - sum(v[j] * gG[k, j] for j in range(grid.dim))
        for k in range(grid.dim)
    ])
    return _out(fl.project_hat(fl._fft(prod, grid), grid), mask)


def nonlinearity_B(v: VectorField, F: VectorField, form: str = "auto", dealias: bool = False) -> VectorField:
    """B(v, F) = P(v x curl F); form is 'cross' (3D), 'gradient', or 'auto'."""
    fl._check_same(v, F)
    g = v.grid
    if form == "auto":
        form = "cross" if g.dim == 3 else "gradient"
    mask = g.dealias_mask if dealias else None
    c = b_term_hat(fl._fft(v.components, g), fl._fft(F.components, g), g, form, mask)
    return VectorField(g, fl._ifft(c, g))


def curl_cross(v: VectorField, G: VectorField, form: str = "auto", dealias: bool = False) -> VectorField:
    fl._check_same(v, G)
    g = v.grid
    if form == "auto":
        form = "cross" if g.dim == 3 else "gradient"
    mask = g.dealias_mask if dealias else None
    c = g_term_hat(fl._fft(v.components, g), fl._fft(G.components, g), g, form, mask)
    return VectorField(g, fl._ifft(c, g))


def _kmax(grid: Grid, dealias: bool) -> float:
    out = 0.0
    for n, L in zip(grid.sizes, grid.box):
        m = fl.dealias_cutoff(n) if dealias else n // 2 - 1
        out = max(out, 2 * np.pi * m / L)
    return out


def _integrate(u0h, rhs, L, T, cfg, grid, record, cfl_check):
    n = n_steps_for(T, cfg.dt)
    dt = T / n if n else 0.0
    rec = set(range(n + 1)) if record is None else set(int(i) for i in record)
    times, states = [], []

    def keep(i, uh):
        if i in rec:
            times.append(i * dt)
            states.append(fl._ifft(uh, grid))

    uh = u0h.copy()
    keep(0, uh)
    E = np.exp(L * dt / 2)
    E2 = E * E
    for i in range(n):
        t = i * dt
        cfl_check(t, dt)
        if cfg.scheme == "IFEuler":
            uh = E2 * (uh + dt * rhs(uh, t))
        else:
            k1 = rhs(uh, t)
            k2 = rhs(E * (uh + 0.5 * dt * k1), t + 0.5 * dt)
            k3 = rhs(E * uh + 0.5 * dt * k2, t + 0.5 * dt)
            k4 = rhs(E2 * uh + dt * E * k3, t + dt)
            uh = E2 * uh + dt / 6.0 * (E2 * k1 + 2.0 * E * (k2 + k3) + k4)
        keep(i + 1, uh)
    return np.array(times), np.array(states), n, dt


def _solve(kind, X0, v, f, T, cfg, form, record):
    v = as_velocity(v)
    grid = X0.grid
    if v.grid != grid:
        raise ValueError("velocity grid does not match the initial field")
    div = np.max(np.abs(fl.div_hat(fl._fft(X0.components, grid), grid)))
    if div > 1e-8 * max(1.0, X0.max_abs()):
        raise ValueError(f"initial field is not divergence-free (|div| = {div:.2e})")
    if form == "auto":
        form = "cross" if grid.dim == 3 else "gradient"
    mask = _mask(grid, cfg)
    L = -cfg.nu * grid.k2
    f = as_velocity(f) if f is not None else None
    kmax = _kmax(grid, cfg.dealias)

    if kind == "F":
        def vel(t):
            return v.hat(t)

        def rhs(uh, t):
            out = -b_term_hat(vel(t), uh, grid, form, mask)
            return out + f.hat(t) if f is not None else out
    else:
        def vel(t):
            return v.hat(T - t)

        def rhs(uh, t):
            out = g_term_hat(vel(t), uh, grid, form, mask)
            return out + f.hat(t) if f is not None else out

    checked = {}

    def cfl_check(t, dt):
        if v.is_frozen and checked:
            return
        speed = v.max_speed([t, T - t]) if not v.is_frozen else v.samples[0].max_abs()
        checked[t] = speed
        if dt * speed * kmax > 1.0:
            raise NumericalGuardError(
                f"CFL guard: dt*max|v|*kmax = {dt * speed * kmax:.3f} > 1 (dt={dt}, max|v|={speed:.3f})")

    times, states, n, dt = _integrate(fl._fft(X0.components, grid), rhs, L, T, cfg, grid, record, cfl_check)
    meta = {"equation": kind, "n_steps": n, "dt_eff": dt, "form": form, "T": T}
    return Trajectory(times, states, grid, cfg, meta)


def solve_F(F0: VectorField, v, f=None, T: float = 1.0, cfg: SolverConfig = None,
            form: str = "auto", record=None) -> Trajectory:
    """Integrate dF/dt = nu Lap F - P(v(t) x curl F) + f(t) on [0, T]."""
    return _solve("F", F0, v, f, T, cfg, form, record)


def solve_G(G0: VectorField, v, f=None, T: float = 1.0, cfg: SolverConfig = None,
            form: str = "auto", record=None) -> Trajectory:
    """Integrate dG/dt = nu Lap G + curl(v(T - t) x G) + f(t) on [0, T]."""
    return _solve("G", G0, v, f, T, cfg, form, record)


def transport(F0: VectorField, v, T: float, cfg: SolverConfig, form: str = "auto") -> VectorField:
    """T_T^v F0: final state of the F-equation with zero forcing."""
    if T == 0:
        return F0
    n = n_steps_for(T, cfg.dt)
    return solve_F(F0, v, None, T, cfg, form, record=[n]).final


def heat(F0: VectorField, nu: float, t: float) -> VectorField:
    g = F0.grid
    return VectorField(g, fl._ifft(np.exp(-nu * t * g.k2) * fl._fft(F0.components, g), g))


@dataclass
class EnergyReport:
    times: np.ndarray
    energy: np.ndarray       # |F|_H^2
    dissipation: np.ndarray  # nu ||grad F||^2
    exchange: np.ndarray     # (curl F, v x F)_H
    residual: np.ndarray     # |F(t)|^2 - |F0|^2 - int(-2 D + 2 C); NaN off Simpson nodes
    bound: np.ndarray        # |F0|^2 exp(2 int ||grad v||_inf)
    lhs: np.ndarray          # |F(t)|^2 + 2 int D

    @property
    def max_residual(self) -> float:
        return float(np.nanmax(np.abs(self.residual)))

    @property
    def inequality_holds(self) -> bool:
        return bool(np.all(self.lhs <= self.bound * (1 + 1e-12) + 1e-14))


def energy_diagnostics(traj: Trajectory, v, cfg: SolverConfig = None) -> EnergyReport:
    """Energy identity d|F|^2/dt = -2 nu ||grad F||^2 + 2 (curl F, v x F) along a stored trajectory.

    The time integral uses Simpson's rule on consecutive pairs of equal steps,
    so the trajectory must contain every step.
    """
    v = as_velocity(v)
    cfg = cfg or traj.cfg
    g = traj.grid
    dV = g.cell_volume
    E, D, C, G = [], [], [], []
    for t, s in zip(traj.times, traj.states):
        sh = fl._fft(s, g)
        vv = v.at(t).components
        E.append(np.sum(s * s) * dV)
        gF = fl._ifft(fl.grad_hat(sh, g), g)
        D.append(cfg.nu * np.sum(gF * gF) * dV)
        cF = fl._ifft(fl.curl_hat(sh, g), g)
        if g.dim == 2:
            C.append(np.sum(cF[0] * (vv[0] * s[1] - vv[1] * s[0])) * dV)
        else:
            C.append(np.sum(cF * fl.cross(vv, s)) * dV)
        gv = fl.jacobian(v.at(t))
        G.append(_max_op_norm(gv))
    E, D, C, G = map(np.array, (E, D, C, G))
    rate = -2 * D + 2 * C
    t = traj.times
    integral = np.zeros_like(t)
    intD = np.zeros_like(t)
    intG = np.zeros_like(t)
    for i in range(1, len(t)):
        h = t[i] - t[i - 1]
        if i >= 2 and i % 2 == 0 and abs((t[i - 1] - t[i - 2]) - h) < 1e-12:
            w = (h / 3.0) * np.array([1.0, 4.0, 1.0])
            sl = slice(i - 2, i + 1)
            integral[i] = integral[i - 2] + w @ rate[sl]
            intD[i] = intD[i - 2] + w @ D[sl]
        else:
            integral[i] = integral[i - 1] + 0.5 * h * (rate[i] + rate[i - 1])
            intD[i] = intD[i - 1] + 0.5 * h * (D[i] + D[i - 1])
        intG[i] = intG[i - 1] + 0.5 * h * (G[i] + G[i - 1])
    residual = E - E[0] - integral
    residual[1::2] = np.nan  # identity is reported at Simpson nodes only
    resid = residual
    lhs = E + 2 * intD
    bound = E[0] * np.exp(2 * intG)
    return EnergyReport(t, E, D, C, resid, bound, lhs)


def _max_op_norm(gv: np.ndarray) -> float:
    """max over points of the spectral norm of the symmetric part bound |grad v|_op."""
    d = gv.shape[0]
    M = np.moveaxis(gv.reshape(d, d, -1), -1, 0)
    return float(np.max(np.linalg.norm(M, ord=2, axis=(1, 2))))
