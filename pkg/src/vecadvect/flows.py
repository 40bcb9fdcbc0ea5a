"""Stochastic flows on the torus: the rotation families, joint gradient integration,
contour transport, circulation and the martingale / one-point-law checks.

Clock: a flow started at t0 is advanced with the drift v(t) at step times
t0 + n dt; step n of path p draws its normals from Philox counter
(n * refine + q, p, stream, 0), q < refine.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from . import _kernels as K
from . import fields as fl
from . import pde
from .fields import Grid, ModeTable, ScalarField, VectorField
from .pde import NumericalGuardError, SolverConfig, TimeDependentVelocity
from .so3 import RotationField, correction_from_derivative, exp_so3

FLAG_BUDGET = 0.01
PSI_KINDS = {"linear": 0, "arctan": 1}


class FlowExplosionError(NumericalGuardError):
    """More than the allowed fraction of paths left the determinant window or went non-finite."""


# rotation families

@dataclass(frozen=True)
class Identity:
    code = K.IDENTITY


@dataclass(frozen=True)
class Rot2DSameLaw:
    """Noise rotated by psi(rot v); psi is c*s or arctan(c*s)."""
    psi: str = "linear"
    c: float = 1.0
    code = K.ROT2D_SAME


@dataclass(frozen=True, eq=False)
class Rot2DBrownian:
    """Drift-free flow whose noise is rotated by angle_scale * phi, v = perp_grad(phi).

    angle_scale=None means -1/(2 nu).
    """
    phi: Optional[ScalarField] = None
    angle_scale: Optional[float] = None
    code = K.ROT2D_BROWNIAN

    def kappa(self, nu: float) -> float:
        return -1.0 / (2.0 * nu) if self.angle_scale is None else float(self.angle_scale)


@dataclass(frozen=True)
class Rot3DBlock:
    """Rotation about axis 3 by psi((curl v)^3)."""
    psi: str = "linear"
    c: float = 1.0
    code = K.ROT3D_BLOCK


@dataclass(frozen=True, eq=False)
class Rot3DExp:
    """sigma = exp(hat a) with a given on the grid or as an analytic RotationField."""
    a: Union[VectorField, RotationField]
    code = K.ROT3D_EXP


RotationKind = Union[Identity, Rot2DSameLaw, Rot2DBrownian, Rot3DBlock, Rot3DExp]


@dataclass(frozen=True, eq=False)
class FlowConfig:
    nu: float
    dt: float
    n_paths: int
    seed: int = 0
    scheme: str = "EulerMaruyama"
    rotation: RotationKind = field(default_factory=Identity)
    refine: int = 1

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if int(self.n_paths) < 1:
            raise ValueError(f"n_paths must be >= 1, got {self.n_paths}")
        if self.scheme != "EulerMaruyama":
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if int(self.refine) < 1:
            raise ValueError("refine must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if isinstance(self.rotation, (Rot2DSameLaw, Rot3DBlock)) and self.rotation.psi not in PSI_KINDS:
            raise ValueError(f"unknown psi {self.rotation.psi!r}")

    @property
    def kind_name(self) -> str:
        return type(self.rotation).__name__

    def to_dict(self) -> dict:
        return {"nu": self.nu, "dt": self.dt, "n_paths": int(self.n_paths), "seed": int(self.seed),
                "scheme": self.scheme, "rotation": self.kind_name, "refine": int(self.refine)}


def stream_function(v: VectorField) -> ScalarField:
    """phi with perp_grad(phi) = v for a mean-free solenoidal planar v (phi has zero mean)."""
    g = v.grid
    if g.dim != 2:
        raise ValueError("stream function needs dim = 2")
    div = fl.divergence(v).samples
    if np.max(np.abs(div)) > 1e-10:
        raise ValueError(f"velocity not solenoidal (max |div| = {np.max(np.abs(div)):.2e})")
    w = fl._fft(fl.curl(v).samples[None], g)[0]
    k2 = g.k2
    ph = np.where(k2 > 0, -w / np.where(k2 > 0, k2, 1.0), 0)
    return ScalarField(g, fl._ifft(ph[None], g)[0])


# kernel argument assembly

def _empty_table(d: int, C: int = 1) -> tuple:
    return (np.zeros(1), np.zeros((0, d), dtype=np.int64), np.zeros((1, 0, C), dtype=np.complex128),
            np.ones(d), np.zeros(d, dtype=np.int64))


def _u64(seed) -> np.uint64:
    return np.uint64(int(seed))


def _sample_times(v: TimeDependentVelocity, t0: float, n_steps: int, dt: float):
    if v.is_frozen or n_steps == 0:
        return [t0]
    return [t0 + i * dt for i in range(n_steps + 1)]


def _table(fields_, times) -> tuple:
    tab = fl.mode_table(fields_ if len(fields_) > 1 else fields_[0], times if len(fields_) > 1 else None)
    return tab.numba_args()


def _velocity_guard(v: TimeDependentVelocity, times, dt: float):
    h = min(b / n for b, n in zip(v.grid.box, v.grid.sizes))
    vmax = v.max_speed(times)
    if not np.isfinite(vmax) or dt * vmax > h:
        raise NumericalGuardError(f"drift step dt*max|v| = {dt * vmax:.3g} exceeds grid spacing {h:.3g}")


def kernel_args(v, cfg: FlowConfig, d: int, t0: float, n_steps: int, dt: Optional[float] = None) -> dict:
    """Drift and rotation tables for a run of n_steps starting at t0."""
    dt = cfg.dt if dt is None else dt
    rot = cfg.rotation
    out = {"kind": rot.code, "kappa": 0.0, "psi_kind": 0, "psi_c": 0.0,
           "drift": _empty_table(d, d), "has_drift": False, "rot": _empty_table(d, 1)}
    vel = None if v is None else pde.as_velocity(v)
    if vel is not None and vel.grid.dim != d:
        raise ValueError(f"velocity dim {vel.grid.dim} does not match points dim {d}")
    if isinstance(rot, (Rot2DSameLaw, Rot2DBrownian)) and d != 2:
        raise ValueError(f"{type(rot).__name__} needs dim = 2")
    if isinstance(rot, (Rot3DBlock, Rot3DExp)) and d != 3:
        raise ValueError(f"{type(rot).__name__} needs dim = 3")
    times = _sample_times(vel, t0, n_steps, dt) if vel is not None else [t0]
    if vel is not None and not isinstance(rot, Rot2DBrownian):
        _velocity_guard(vel, times, dt)
        out["drift"] = _table([vel.at(t) for t in times], times)
        out["has_drift"] = True
    if isinstance(rot, (Rot2DSameLaw, Rot3DBlock)):
        if vel is None:
            raise ValueError(f"{type(rot).__name__} needs a velocity")
        if d == 2:
            s = [fl.curl(vel.at(t)) for t in times]
        else:
            s = [ScalarField(vel.grid, fl.curl(vel.at(t)).components[2]) for t in times]
        out["rot"] = _table(s, times)
        out["psi_kind"] = PSI_KINDS[rot.psi]
        out["psi_c"] = float(rot.c)
    elif isinstance(rot, Rot2DBrownian):
        if rot.phi is not None:
            phi = [rot.phi]
            ptimes = [t0]
        else:
            if vel is None:
                raise ValueError("Rot2DBrownian needs phi or a velocity")
            phi = [stream_function(vel.at(t)) for t in times]
            ptimes = times
        out["rot"] = _table(phi, ptimes)
        out["kappa"] = rot.kappa(cfg.nu)
    elif isinstance(rot, Rot3DExp):
        a = rot.a
        if isinstance(a, RotationField):
            if vel is None:
                raise ValueError("an analytic Rot3DExp field needs a velocity grid to sample on")
            a = a.sample(vel.grid)
        out["rot"] = _table([a], [t0])
    return out


def _flat(ka: dict) -> tuple:
    return ((ka["kind"], ka["kappa"], ka["psi_kind"], ka["psi_c"]) + ka["drift"] + (ka["has_drift"],)
            + ka["rot"])


# ensembles

@dataclass
class FlowEnsemble:
    positions: np.ndarray   # (n_paths, n_points, d)
    gradients: np.ndarray   # (n_paths, n_points, d, d)
    time: float
    start: float
    step: int = 0
    path_ids: np.ndarray = None
    stream: int = 0
    flagged: np.ndarray = None  # per path
    _prev: Optional[tuple] = field(default=None, repr=False)

    @classmethod
    def start_at(cls, points, n_paths: int, t0: float = 0.0, stream: int = 0, path_offset: int = 0):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        P, d = pts.shape
        pos = np.broadcast_to(pts, (n_paths, P, d)).copy()
        grads = np.broadcast_to(np.eye(d), (n_paths, P, d, d)).copy()
        ids = np.arange(path_offset, path_offset + n_paths, dtype=np.int64)
        return cls(pos, grads, float(t0), float(t0), 0, ids, int(stream), np.zeros(n_paths, dtype=bool))

    @property
    def n_paths(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[2]

    def flag_fraction(self) -> float:
        return float(np.mean(self.flagged))


def _normals(e: FlowEnsemble, cfg: FlowConfig) -> np.ndarray:
    return K.ensemble_normals(_u64(cfg.seed), e.step, int(cfg.refine), e.path_ids, e.stream, e.dim)


def _advance(X, J, Z, t, v, cfg, want_J):
    ka = kernel_args(v, cfg, X.shape[2], t, 1)
    K.step_points(X, J, Z, t, cfg.dt, cfg.nu, *_flat(ka), want_J)


def step_ensemble(e: FlowEnsemble, v, cfg: FlowConfig) -> FlowEnsemble:
    """One Euler-Maruyama step of the positions; gradients are left for step_gradients."""
    Z = _normals(e, cfg)
    X = e.positions.copy()
    J = e.gradients.copy()
    _advance(X, J, Z, e.time, v, cfg, False)
    return replace(e, positions=X, time=e.time + cfg.dt, step=e.step + 1,
                   _prev=(e.positions, e.gradients, e.time, Z))


def step_gradients(e: FlowEnsemble, v, cfg: FlowConfig) -> FlowEnsemble:
    """Gradient update for the step last taken by step_ensemble, with the same increments."""
    if e._prev is None:
        raise ValueError("step_gradients must follow step_ensemble")
    X0, J0, t, Z = e._prev
    X = X0.copy()
    J = J0.copy()
    _advance(X, J, Z, t, v, cfg, True)
    if not np.array_equal(X, e.positions):
        raise RuntimeError("position replay mismatch")
    flagged = e.flagged | _bad_paths(J)
    out = replace(e, gradients=J, flagged=flagged, _prev=None)
    check_budget(int(flagged.sum()), e.n_paths)
    return out


def step(e: FlowEnsemble, v, cfg: FlowConfig) -> FlowEnsemble:
    return step_gradients(step_ensemble(e, v, cfg), v, cfg)


def _bad_paths(J: np.ndarray) -> np.ndarray:
    det = np.abs(np.linalg.det(J))
    bad = ~((det >= K.DET_LO) & (det <= K.DET_HI)) | ~np.isfinite(J).all(axis=(-1, -2))
    return bad.any(axis=1)


def check_budget(n_flagged: int, n_total: int, budget: float = FLAG_BUDGET):
    if n_total and n_flagged / n_total > budget:
        raise FlowExplosionError(f"{n_flagged} of {n_total} paths flagged (budget {budget:.0%})")


def simulate(points, v, cfg: FlowConfig, t0: float, t1: float, record=None, gradients: bool = True,
             stream: int = 0, path_offset: int = 0):
    """Shared-noise paths for a point set; returns (step_times, positions, gradients).

    record lists step indices to keep (default: the final step only). positions are
    (record, path, point, d); gradients add a trailing d.
    """
    pts = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
    n = pde.n_steps_for(t1 - t0, cfg.dt)
    dt = (t1 - t0) / n if n else cfg.dt
    rec = np.asarray([n] if record is None else sorted(record), dtype=np.int64)
    ka = kernel_args(v, cfg, pts.shape[1], t0, n, dt)
    pos, grads = K.run_shared(pts, int(cfg.n_paths), int(path_offset), int(stream), _u64(cfg.seed),
                              float(t0), n, dt, int(cfg.refine), cfg.nu, *_flat(ka), rec, gradients)
    return t0 + rec * dt, pos, grads


# contours and circulation

@dataclass(frozen=True, eq=False)
class Contour:
    points: np.ndarray  # (M, d), closed: last connects to first

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.points, dtype=float))
        if p.shape[0] < 16:
            raise ValueError(f"a contour needs at least 16 points, got {p.shape[0]}")
        if np.any(np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1) == 0):
            raise ValueError("consecutive contour points coincide")
        object.__setattr__(self, "points", p)

    @classmethod
    def circle(cls, center, radius: float, M: int = 256, axes=(0, 1)) -> "Contour":
        c = np.asarray(center, dtype=float)
        th = 2 * np.pi * np.arange(M) / M
        p = np.tile(c, (M, 1))
        p[:, axes[0]] += radius * np.cos(th)
        p[:, axes[1]] += radius * np.sin(th)
        return cls(p)

    @property
    def M(self) -> int:
        return self.points.shape[0]

    def refined(self) -> "Contour":
        """Midpoint insertion (M -> 2M); exact for straight polygon edges."""
        p = self.points
        mid = 0.5 * (p + np.roll(p, -1, axis=0))
        out = np.empty((2 * len(p), p.shape[1]))
        out[0::2] = p
        out[1::2] = mid
        return Contour(out)


@dataclass
class ContourEnsemble:
    times: np.ndarray
    positions: np.ndarray  # (R, n_paths, M, d)
    gradients: np.ndarray  # (R, n_paths, M, d, d)


def transport_contour(contour: Contour, v, cfg: FlowConfig, s: float, t: float, record=None,
                      stream: int = 0) -> ContourEnsemble:
    """X_s(t; Gamma) with pathwise gradients for every contour point."""
    if t < s:
        raise ValueError("need s <= t")
    times, pos, grads = simulate(contour.points, v, cfg, s, t, record=record, stream=stream)
    check_budget(int(_bad_paths(grads.reshape((-1,) + grads.shape[2:])).sum()) if grads.size else 0,
                 grads.shape[0] * grads.shape[1] if grads.size else 1)
    return ContourEnsemble(times, pos, grads)


def circulation(points, F) -> np.ndarray:
    """Midpoint rule sum F((x_i + x_{i+1})/2) . (x_{i+1} - x_i) over closed cycles.

    points: (..., M, d); returns an array of shape points.shape[:-2].
    """
    p = np.asarray(points, dtype=float)
    nxt = np.roll(p, -1, axis=-2)
    mid = 0.5 * (p + nxt)
    d = p.shape[-1]
    vals = fl.evaluate_at(F, mid.reshape(-1, d)).reshape(mid.shape)
    return np.sum(vals * (nxt - p), axis=(-1, -2))


def advection_circulation(points, F: VectorField, v: VectorField) -> float:
    """Circulation of (v . grad)F - (grad F)^T v, i.e. -(v x curl F)."""
    J = fl.jacobian(F)  # [i, a] = d_a F_i
    vc = v.components
    a = np.einsum("a...,ia...->i...", vc, J) - np.einsum("i...,ia...->a...", vc, J)
    return float(circulation(points, VectorField(F.grid, a)))


def _angle_and_grad(rotation, pts, nu: float, v: Optional[VectorField]):
    if isinstance(rotation, Rot2DBrownian):
        phi = rotation.phi if rotation.phi is not None else stream_function(v)
        val, g = fl.evaluate_at(phi, pts, gradient=True)
        kap = rotation.kappa(nu)
        return kap * val, kap * g.reshape(len(pts), -1)
    if v is None:
        raise ValueError(f"{type(rotation).__name__} needs a velocity")
    w = fl.curl(v)
    s = w if v.grid.dim == 2 else ScalarField(v.grid, w.components[2])
    val = fl.evaluate_at(s, pts)
    c = float(rotation.c)
    return (c * val if rotation.psi == "linear" else np.arctan(c * val)), None


def correction_term_integrand(points, F: VectorField, rotation: RotationKind, nu: float,
                              v: Optional[VectorField] = None) -> float:
    """Ito correction of the circulation along a closed polygon.

    2D / block: 2 nu sum rot F (theta(x_{i+1}) - theta(x_i)) with rot F at edge midpoints.
    Rot3DExp: 2 nu sum (curl F, sigma c) with c = vee(sigma^T d sigma) along the edge.
    """
    p = np.asarray(points, dtype=float)
    nxt = np.roll(p, -1, axis=0)
    mid = 0.5 * (p + nxt)
    if isinstance(rotation, Identity):
        return 0.0
    w = fl.curl(F)
    if isinstance(rotation, Rot3DExp):
        a = rotation.a
        if isinstance(a, VectorField):
            aval, agrad = fl.evaluate_at(a, mid, gradient=True)
        else:
            aval, agrad = a.value_and_jacobian(mid)
        da = np.einsum("pik,pk->pi", agrad, nxt - p)
        c = correction_from_derivative(aval, da)
        Rc = np.einsum("pij,pj->pi", exp_so3(aval), c)
        wv = fl.evaluate_at(w, mid)
        return float(2 * nu * np.sum(wv * Rc))
    th_a, _ = _angle_and_grad(rotation, p, nu, v)
    dth = np.roll(th_a, -1) - th_a
    rot_vals = fl.evaluate_at(w if F.grid.dim == 2 else ScalarField(F.grid, w.components[2]), mid)
    return float(2 * nu * np.sum(rot_vals * dth))


# martingale and one-point checks

@dataclass
class MartingaleReport:
    times: list
    means: list
    stderr: list
    start_value: float
    deviations: list
    bias_allowance: list
    tolerance: list
    passed: bool
    n_paths: int
    n_flagged: int
    kind: str

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def csv_rows(self):
        yield ("t", "mean", "stderr", "deviation", "tolerance")
        for r in zip(self.times, self.means, self.stderr, self.deviations, self.tolerance):
            yield r


def _contour_run(points, cfg, refine, t0, n, dt, ka, checkpoints, table: ModeTable, stream=0):
    return K.run_contour(points, int(cfg.n_paths), 0, int(stream), _u64(cfg.seed), float(t0), n, dt,
                         int(refine), cfg.nu, *_flat(ka), checkpoints, *table.numba_args())


def martingale_test(contour: Contour, F0: VectorField, v, T: float, s: float, cfg: FlowConfig,
                    pde_cfg: SolverConfig, n_checkpoints: int = 5, bias: bool = True,
                    stream: int = 0) -> MartingaleReport:
    """E M(t) for M(t) = circulation of F(T - t) along X_{T-s}(t; Gamma), t in [T-s, T].

    F solves the F-equation with the clock-reversed velocity tau -> v(T - tau).
    The reported run uses refine=2r over n steps; the coupled run with 2n steps
    and refine=r shares its normals and gives the dt-bias allowance 2|E(M_fine - M)|.
    """
    from .duality import checkpoint_steps
    v = pde.as_velocity(v)
    if not 0 < s <= T:
        raise ValueError("need 0 < s <= T")
    t0 = T - s
    n = max(pde.n_steps_for(s, cfg.dt), 1)
    dt = s / n
    steps = checkpoint_steps(n, n_checkpoints)
    m = pde.n_steps_for(s, pde_cfg.dt)
    traj = pde.solve_F(F0, pde.clock_reverse(v, T), None, s, pde_cfg, record=list(range(m + 1)))
    snaps = [traj.at(max(s - k * dt, 0.0)) for k in steps]
    table = fl.mode_table(snaps, np.arange(len(steps), dtype=float))
    pts = np.ascontiguousarray(contour.points)
    ka = kernel_args(v, cfg, pts.shape[1], t0, n, dt)
    cps = np.asarray(steps, dtype=np.int64)
    r = int(cfg.refine)
    circ = _contour_run(pts, cfg, 2 * r if bias else r, t0, n, dt, ka, cps, table, stream)
    ok = np.isfinite(circ).all(axis=1)
    n_flag = int((~ok).sum())
    check_budget(n_flag, len(circ))
    circ = circ[ok]
    mean = circ.mean(axis=0)
    se = circ.std(axis=0, ddof=1) / math.sqrt(len(circ)) if len(circ) > 1 else np.zeros(len(steps))
    allow = np.zeros(len(steps))
    if bias:
        ka2 = kernel_args(v, cfg, pts.shape[1], t0, 2 * n, dt / 2)
        fine = _contour_run(pts, cfg, r, t0, 2 * n, dt / 2, ka2, 2 * cps, table, stream)[ok]
        allow = 2 * np.abs(np.mean(fine - circ, axis=0))
    start = float(circulation(pts, snaps[0]))
    dev = np.abs(mean - mean[0])
    comb = np.sqrt(se**2 + se[0] ** 2)
    tol = 3 * comb + allow
    return MartingaleReport([t0 + k * dt for k in steps], mean.tolist(), se.tolist(), start, dev.tolist(),
                            allow.tolist(), tol.tolist(), bool(np.all(dev <= tol + 1e-300)),
                            int(cfg.n_paths), n_flag, cfg.kind_name)


@dataclass
class OnePointReport:
    mean: list
    mean_se: list
    cov: list
    cov_se: list
    expected_cov: list
    kurtosis: list
    kurtosis_se: float
    passed_mean: bool
    passed_cov: bool
    passed_kurtosis: bool

    @property
    def passed(self) -> bool:
        return self.passed_mean and self.passed_cov and self.passed_kurtosis

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["passed"] = self.passed
        return d


def one_point_law_test(cfg: FlowConfig, T: float, v=None, x0=None, t0: float = 0.0,
                       stream: int = 0) -> OnePointReport:
    """Mean, covariance and 4th-moment ratio of X_T - X_0 against Brownian motion with variance 2 nu T."""
    d = 2 if v is None else pde.as_velocity(v).grid.dim
    x0 = np.full(d, 1.0) if x0 is None else np.asarray(x0, dtype=float)
    _, pos, _ = simulate(x0[None], v, cfg, t0, t0 + T, gradients=False, stream=stream)
    dx = pos[0, :, 0, :] - x0
    n = dx.shape[0]
    mean = dx.mean(axis=0)
    mean_se = dx.std(axis=0, ddof=1) / math.sqrt(n)
    c = dx - mean
    prod = c[:, :, None] * c[:, None, :]
    cov = prod.mean(axis=0)
    cov_se = prod.std(axis=0, ddof=1) / math.sqrt(n)
    expected = 2 * cfg.nu * T * np.eye(d)
    kurt = np.mean(c**4, axis=0) / np.mean(c**2, axis=0) ** 2
    kse = math.sqrt(24.0 / n)
    return OnePointReport(mean.tolist(), mean_se.tolist(), cov.tolist(), cov_se.tolist(), expected.tolist(),
                          kurt.tolist(), kse, bool(np.all(np.abs(mean) <= 3 * mean_se)),
                          bool(np.all(np.abs(cov - expected) <= 3 * cov_se)),
                          bool(np.all(np.abs(kurt - 3) <= 3 * kse)))


def se_slope(ns, ses) -> float:
    """Least-squares slope of log SE against log n."""
    return float(np.polyfit(np.log(np.asarray(ns, float)), np.log(np.asarray(ses, float)), 1)[0])
