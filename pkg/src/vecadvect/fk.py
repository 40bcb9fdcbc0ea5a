"""Monte Carlo Feynman-Kac estimators on the grid nodes and their PDE cross-checks.

Q_s(x) = E[ sum_i F0^i(X) dX^i/dx_j ] for the flow X_{T-s}(T; x); F(s) = P(Q_s).
The PDE counterpart solves the F-equation with tau -> v(T - tau) over [0, s].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _kernels as K
from . import fields as fl
from . import pde
from .fields import ScalarField, VectorField
from .flows import (FlowConfig, Identity, Rot2DBrownian, _flat, _u64, check_budget, kernel_args)
from .pde import SolverConfig


@dataclass
class FkEstimate:
    field: VectorField          # estimate (projected for curve weights)
    raw: VectorField            # node means before projection
    stderr: np.ndarray          # (C, *sizes) standard error of each node mean
    n_paths: int
    kind: str
    seed: int
    n_flagged: int = 0
    second_moment: float = 0.0  # max over nodes of E|w|^2
    meta: dict = field(default_factory=dict)

    def se_norm(self) -> float:
        """sqrt(E ||noise||_H^2) for independent node errors."""
        return float(math.sqrt(np.sum(self.stderr**2) * self.field.grid.cell_volume))

    def summary(self) -> dict:
        se = self.stderr.reshape(self.stderr.shape[0], -1)
        return {"n_paths": self.n_paths, "kind": self.kind, "seed": int(self.seed), "n_flagged": self.n_flagged,
                "stderr_max": se.max(axis=1).tolist(), "stderr_mean": se.mean(axis=1).tolist(),
                "se_norm": self.se_norm(), "second_moment": self.second_moment, **self.meta}


def _to_field(vals: np.ndarray, grid) -> np.ndarray:
    return np.ascontiguousarray(vals.T.reshape((vals.shape[1],) + grid.sizes))


def _estimate(F0: VectorField, v, T: float, s: float, cfg: FlowConfig, weight: int, crn: bool,
              stream_offset: int, project: bool) -> FkEstimate:
    g = F0.grid
    if not 0 <= s <= T:
        raise ValueError("need 0 <= s <= T")
    n = pde.n_steps_for(s, cfg.dt)
    kind = type(cfg.rotation).__name__
    if n == 0:
        raw = F0
        se = np.zeros_like(F0.components)
        return FkEstimate(fl.helmholtz_project(raw) if project else raw, raw, se, int(cfg.n_paths), kind,
                          int(cfg.seed))
    dt = s / n
    pts = np.ascontiguousarray(g.nodes())
    P = len(pts)
    streams = np.zeros(P, dtype=np.int64) if crn else np.arange(P, dtype=np.int64)
    streams += stream_offset
    ka = kernel_args(v, cfg, g.dim, T - s, n, dt)
    ftab = fl.mode_table(F0).numba_args()
    sums, sumsq, flagged = K.run_nodes(pts, int(cfg.n_paths), 0, streams, _u64(cfg.seed), float(T - s), n, dt,
                                       int(cfg.refine), cfg.nu, *_flat(ka), *ftab, weight)
    check_budget(int(flagged.max()), int(cfg.n_paths))
    m = (cfg.n_paths - flagged).astype(float)[:, None]
    mean = sums / m
    var = np.maximum(sumsq / m - mean**2, 0.0) * m / np.maximum(m - 1, 1)
    raw = VectorField(g, _to_field(mean, g))
    se = _to_field(np.sqrt(var / m), g)
    second = float(np.max(np.sum(sumsq / m, axis=1)))
    est = fl.helmholtz_project(raw) if project else raw
    return FkEstimate(est, raw, se, int(cfg.n_paths), kind, int(cfg.seed), int(flagged.sum()), second,
                      {"dt": dt, "n_steps": n, "crn": bool(crn)})


def fk_curve(F0: VectorField, v, nu: float, T: float, s: float, cfg: FlowConfig, crn: bool = False,
             stream_offset: int = 0) -> FkEstimate:
    """Curve (covector) representation over the flow of cfg.rotation; Identity by default."""
    cfg = _with_nu(cfg, nu)
    return _estimate(F0, v, T, s, cfg, K.W_CURVE, crn, stream_offset, True)


def fk_rot2d(F0: VectorField, phi: ScalarField, nu: float, T: float, s: float, cfg: FlowConfig,
             crn: bool = False, stream_offset: int = 0) -> FkEstimate:
    """Same estimator over the drift-free rotated-Brownian flow with stream function phi."""
    scale = cfg.rotation.angle_scale if isinstance(cfg.rotation, Rot2DBrownian) else None
    cfg = replace(_with_nu(cfg, nu), rotation=Rot2DBrownian(phi=phi, angle_scale=scale))
    return _estimate(F0, None, T, s, cfg, K.W_CURVE, crn, stream_offset, True)


def fk_surface(F0_curl_form: VectorField, v, nu: float, T: float, s: float, cfg: FlowConfig,
               crn: bool = False, stream_offset: int = 0) -> FkEstimate:
    """2-form representation: E[cof(grad X)^T F0(X)]; no projection."""
    if F0_curl_form.grid.dim != 3:
        raise ValueError("fk_surface needs dim = 3")
    div = fl.divergence(F0_curl_form).samples
    if np.max(np.abs(div)) > 1e-8 * max(F0_curl_form.max_abs(), 1.0):
        raise ValueError("F0 must be divergence-free")
    cfg = _with_nu(cfg, nu)
    return _estimate(F0_curl_form, v, T, s, cfg, K.W_SURFACE, crn, stream_offset, False)


def _with_nu(cfg: FlowConfig, nu: float) -> FlowConfig:
    return cfg if nu is None or nu == cfg.nu else replace(cfg, nu=nu)


def fk_complex_check(F0: VectorField, phi: ScalarField, nu: float, T: float, s: float, cfg: FlowConfig,
                     nodes=None, stream_offset: int = 0) -> dict:
    """Run the Wirtinger system beside the real gradient SDE on the same increments.

    nodes: flat node indices to use (default all). Reports pathwise state and weight
    gaps and the gap between the two node means.
    """
    g = F0.grid
    if g.dim != 2:
        raise ValueError("fk_complex_check needs dim = 2")
    n = pde.n_steps_for(s, cfg.dt)
    dt = s / n if n else cfg.dt
    allp = g.nodes()
    idx = np.arange(len(allp)) if nodes is None else np.asarray(nodes, dtype=np.int64)
    pts = np.ascontiguousarray(allp[idx])
    streams = idx.astype(np.int64) + stream_offset
    scale = cfg.rotation.angle_scale if isinstance(cfg.rotation, Rot2DBrownian) else None
    kappa = Rot2DBrownian(phi, scale).kappa(nu)
    rt = fl.mode_table(phi).numba_args()
    ft = fl.mode_table(F0).numba_args()
    real, cplx, flagged, max_state, max_weight = K.run_complex(
        pts, int(cfg.n_paths), 0, streams, _u64(cfg.seed), float(T - s), n, dt, int(cfg.refine), nu, kappa,
        *rt, *ft)
    m = (cfg.n_paths - flagged).astype(float)[:, None]
    gap = float(np.max(np.abs(real / m - cplx / m))) if len(pts) else 0.0
    scale_ = max(float(np.max(np.abs(real / m))), 1e-300)
    return {"max_state_gap": float(max_state), "max_weight_gap": float(max_weight), "estimate_gap": gap,
            "estimate_gap_rel": gap / scale_, "n_nodes": int(len(pts)), "n_paths": int(cfg.n_paths),
            "n_flagged": int(flagged.sum()), "real_means": real / m, "complex_means": cplx / m,
            "passed": bool(max_weight <= 1e-10 and gap <= 1e-10 * max(1.0, scale_))}


def pde_reference(F0: VectorField, v, nu: float, T: float, s: float, dt: float = 1e-3) -> VectorField:
    """F(s) from the F-equation driven by tau -> v(T - tau)."""
    v = pde.as_velocity(v)
    return pde.solve_F(F0, pde.clock_reverse(v, T), None, s, SolverConfig(nu, dt)).final


@dataclass
class Comparison:
    gap: float
    se: float
    threshold: float
    passed: bool
    floor: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def compare(est: FkEstimate, ref: VectorField, floor: float = 0.02, n_se: float = 3.0) -> Comparison:
    """Relative H-norm gap against max(n_se * relative SE norm, floor)."""
    nr = max(fl.norm_H(ref), 1e-300)
    gap = fl.norm_H(est.field - ref) / nr
    se = est.se_norm() / nr
    thr = max(n_se * se, floor)
    return Comparison(float(gap), float(se), float(thr), bool(gap <= thr), floor)


def compare_estimates(a: FkEstimate, b: FkEstimate, n_se: float = 3.0) -> Comparison:
    """Two independent estimates; the threshold uses the combined SE only."""
    nr = max(fl.norm_H(b.field), 1e-300)
    gap = fl.norm_H(a.field - b.field) / nr
    se = math.hypot(a.se_norm(), b.se_norm()) / nr
    return Comparison(float(gap), float(se), float(n_se * se), bool(gap <= n_se * se), 0.0)


def node_rows(est: FkEstimate, ref: VectorField):
    """CSV rows: node index, |gap|, SE (Euclidean over components)."""
    d = np.sqrt(np.sum((est.field.components - ref.components) ** 2, axis=0)).ravel()
    se = np.sqrt(np.sum(est.stderr**2, axis=0)).ravel()
    yield ("node", "abs_gap", "se")
    for i in range(len(d)):
        yield (i, float(d[i]), float(se[i]))


def curl_noise_norm(est: FkEstimate) -> float:
    """sqrt(E ||curl eps||_H^2) for independent node errors eps with the stored SEs.

    E ||curl eps||^2 = Vol / N^2 sum_c S_c sum_k (|k|^2 - k_c^2), S_c = sum_x se_{x,c}^2.
    Component correlations drop out because sum_k k_c k_c' = 0 for c != c'.
    """
    g = est.field.grid
    k = g.k_eff
    k2 = g.k2
    N = g.n_points
    total = 0.0
    for c in range(est.stderr.shape[0]):
        S = float(np.sum(est.stderr[c] ** 2))
        total += S * float(np.sum(np.broadcast_to(k2 - k[c] ** 2, g.sizes)))
    return math.sqrt(g.volume / N**2 * total)


def surface_curl_consistency(G0: VectorField, v, nu: float, T: float, s: float, cfg: FlowConfig,
                             n_se: float = 3.0) -> dict:
    """fk_surface(curl G0) against curl(fk_curve(G0)) on independent streams."""
    g = G0.grid
    curve = fk_curve(G0, v, nu, T, s, cfg)
    surf = fk_surface(fl.curl(G0), v, nu, T, s, cfg, stream_offset=g.n_points)
    cc = fl.curl(curve.field)
    diff = fl.norm_H(surf.field - cc)
    se = math.hypot(surf.se_norm(), curl_noise_norm(curve))
    ref = max(fl.norm_H(cc), 1e-300)
    return {"gap": float(diff / ref), "se": float(se / ref), "threshold": float(n_se * se / ref),
            "passed": bool(diff <= n_se * se), "surface": surf, "curve": curve,
            "n_flagged": surf.n_flagged + curve.n_flagged}
