"""Verifiers for the self-duality identities, scaling, helicity and the exact Taylor-Green check."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import fields as fl
from . import pde
from .fields import Grid, VectorField
from .pde import SolverConfig, TimeDependentVelocity

EPS = 1e-14


def rel_gap(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), EPS)


@dataclass
class DualityReport:
    times: list
    pairings: list
    deviation: float
    left: float = float("nan")
    right: float = float("nan")
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def csv_rows(self):
        yield ("t", "pairing")
        for t, p in zip(self.times, self.pairings):
            yield (t, p)


def checkpoint_steps(n_steps: int, n_checkpoints: int) -> list:
    return sorted({int(round(i * n_steps / (n_checkpoints - 1))) for i in range(n_checkpoints)})


def pairing_trace(F0: VectorField, G0: VectorField, v, T: float, cfg: SolverConfig,
                  n_checkpoints: int = 10) -> DualityReport:
    """(F(t_i), G(T - t_i))_H at checkpoint times; both equations driven by the same v."""
    fl._check_same(F0, G0)
    n = pde.n_steps_for(T, cfg.dt)
    steps = checkpoint_steps(n, n_checkpoints) if n else [0]
    F = pde.solve_F(F0, v, None, T, cfg, record=steps)
    G = pde.solve_G(G0, v, None, T, cfg, record=[n - i for i in steps])
    g_by_step = {n - i: s for i, s in zip(reversed(steps), G.states)}
    dV = F0.grid.cell_volume
    pair = [float(np.sum(F.states[j] * g_by_step[n - steps[j]]) * dV) for j in range(len(steps))]
    dev = max(abs(p - pair[0]) for p in pair) / max(abs(pair[0]), EPS)
    return DualityReport([float(t) for t in F.times], pair, float(dev),
                         extra={"n_steps": n, "dt_eff": F.meta["dt_eff"]})


def pairing_convergence(F0, G0, v, T, cfg: SolverConfig, n_checkpoints: int = 10, levels: int = 3) -> dict:
    """Pairing reports at dt, dt/2, ... and the observed order of the pairing value."""
    reports, values = [], []
    for lev in range(levels):
        c = SolverConfig(cfg.nu, cfg.dt / 2**lev, cfg.scheme, cfg.dealias)
        r = pairing_trace(F0, G0, v, T, c, n_checkpoints)
        reports.append(r)
        values.append(r.pairings[0])
    orders = []
    for i in range(len(values) - 2):
        d1 = abs(values[i] - values[i + 1])
        d2 = abs(values[i + 1] - values[i + 2])
        orders.append(math.log2(d1 / d2) if d2 > 0 and d1 > 0 else float("nan"))
    return {"dts": [cfg.dt / 2**i for i in range(levels)], "values": values,
            "deviations": [r.deviation for r in reports], "orders": orders, "reports": reports}


def duality_relation(F0: VectorField, G0: VectorField, v, T: float, cfg: SolverConfig):
    """(curl F0, T^{S_T v} G0)_H and (curl T^v F0, G0)_H."""
    if F0.grid.dim != 3:
        raise ValueError("duality_relation needs dim = 3")
    v = pde.as_velocity(v)
    left = fl.inner_product_H(fl.curl(F0), pde.transport(G0, pde.time_reverse(v, T), T, cfg))
    right = fl.inner_product_H(fl.curl(pde.transport(F0, v, T, cfg)), G0)
    return left, right


def embedded_taylor_green(grid3: Grid, nu: float) -> TimeDependentVelocity:
    """Exact Taylor-Green Navier-Stokes solution as a z-independent 3D velocity."""
    nz, lz = grid3.sizes[2], grid3.box[2]
    g2 = Grid(2, grid3.sizes[:2], grid3.box[:2])
    return TimeDependentVelocity(
        grid3, func=lambda t: fl.embed_2d(fl.taylor_green_2d(g2, nu, t), nz, lz), label="taylor_green_3d")


def serrin_experiment(nu: float, T: float, n: int = 32, nz: int = 8, dt: float = 1e-3,
                      n_trials: int = 3, seed: int = 0, kmax: int = 4) -> dict:
    """(curl u(0), T_T^{S_T u} G0) vs (curl u(T), G0) for the exact Taylor-Green solution u."""
    grid = Grid(3, (n, n, nz), (2 * np.pi,) * 3)
    u = embedded_taylor_green(grid, nu)
    cfg = SolverConfig(nu, dt)
    rng = np.random.default_rng(seed)
    su = pde.time_reverse(u, T)
    w0 = fl.curl(u.at(0.0))
    wT = fl.curl(u.at(T))
    gaps, lefts, rights = [], [], []
    for _ in range(n_trials):
        G0 = fl.random_solenoidal(grid, rng, kmax=kmax)
        left = fl.inner_product_H(w0, pde.transport(G0, su, T, cfg))
        right = fl.inner_product_H(wT, G0)
        lefts.append(left)
        rights.append(right)
        gaps.append(rel_gap(left, right))
    FT = pde.transport(u.at(0.0), u, T, cfg)
    ratio = fl.norm_H(fl.curl(FT)) / fl.norm_H(w0)
    return {"nu": nu, "T": T, "left": lefts, "right": rights, "gaps": gaps, "max_gap": max(gaps),
            "vorticity_ratio": ratio, "expected_ratio": math.exp(-2 * nu * T),
            "ratio_error": abs(ratio - math.exp(-2 * nu * T))}


def helicity(u: VectorField) -> float:
    if u.grid.dim != 3:
        raise ValueError("helicity needs dim = 3")
    return fl.inner_product_H(u, fl.curl(u))


def _check_lambda(lam: float) -> int:
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    e = math.log2(lam)
    if abs(e - round(e)) > 1e-12:
        raise ValueError(f"lambda must be a power of two, got {lam}")
    return int(round(e))


def _scale_field(u: VectorField, lam: float, sizes=None) -> VectorField:
    g = u.grid
    box = tuple(b / lam for b in g.box)
    if sizes is None or tuple(sizes) == g.sizes:
        return VectorField(Grid(g.dim, g.sizes, box), lam * u.components)
    sizes = tuple(int(s) for s in sizes)
    want = tuple(n / lam for n in g.sizes)
    if any(abs(s - w) > 1e-9 for s, w in zip(sizes, want)):
        raise ValueError(f"grid sizes {sizes} not commensurate with lambda = {lam} (need {want})")
    new = Grid(g.dim, sizes, box)
    if lam > 1:
        r = int(round(lam))
        sl = (slice(None),) + (slice(None, None, r),) * g.dim
        return VectorField(new, lam * u.components[sl])
    fine = Grid(g.dim, sizes, g.box)
    vals = fl.evaluate_at(u, fine.nodes())
    return VectorField(new, lam * vals.T.reshape((g.dim,) + sizes))


def scaling_transform(u, lam: float, sizes=None):
    """(Psi_lam u)(t, x) = lam u(lam^2 t, lam x); the box shrinks by 1/lam.

    With sizes=None the sample count is kept (exact on samples); otherwise
    sizes must equal N / lam per axis (constant resolution).
    """
    _check_lambda(lam)
    if isinstance(u, VectorField):
        return _scale_field(u, lam, sizes)
    if isinstance(u, TimeDependentVelocity):
        first = _scale_field(u.at(0.0), lam, sizes)
        if u.samples is not None:
            T = u.T / lam**2 if u.T else u.T
            return TimeDependentVelocity(first.grid, samples=[_scale_field(s, lam, sizes) for s in u.samples],
                                         T=T, label=f"Psi{lam}[{u.label}]")
        func = u.func
        return TimeDependentVelocity(first.grid, func=lambda t: _scale_field(func(lam**2 * t), lam, sizes),
                                     label=f"Psi{lam}[{u.label}]")
    raise TypeError("scaling_transform takes a VectorField or TimeDependentVelocity")


def scaling_intertwining(u, F0: VectorField, lam: float, t: float, cfg: SolverConfig, sizes=None) -> dict:
    """Compare T_t^{Psi u} Psi F0 with Psi(T^u_{lam^2 t} F0)."""
    u = pde.as_velocity(u)
    rhs = _scale_field(pde.transport(F0, u, lam**2 * t, cfg), lam, sizes)
    cfg_s = SolverConfig(cfg.nu, cfg.dt / lam**2, cfg.scheme, cfg.dealias)
    lhs = pde.transport(_scale_field(F0, lam, sizes), scaling_transform(u, lam, sizes), t, cfg_s)
    gap = fl.norm_H(lhs - rhs) / max(fl.norm_H(rhs), EPS)
    return {"lambda": lam, "t": t, "gap": gap}


def norm_duality_probe(v, T: float, alpha: int, m: int, cfg: SolverConfig, grid: Grid = None,
                       seed: int = 0, kmax: int = 3, basis=None):
    """Max normalized pairing of T^v on a trial subspace vs the dual chain through T^{S_T v}.

    alpha = 0: <T^v phi_i, phi_j> against <curl phi_i, T^{S v} curl^-1 phi_j>.
    alpha = 1: <curl T^v phi_i, curl phi_j> against <curl phi_i, T^{S v} curl phi_j>.
    Both sides coincide by the duality relation; this is a consistency probe.
    """
    if alpha not in (0, 1):
        raise ValueError("alpha must be 0 or 1")
    v = pde.as_velocity(v)
    grid = grid or v.grid
    if grid.dim != 3:
        raise ValueError("norm_duality_probe needs dim = 3")
    if basis is None:
        rng = np.random.default_rng(seed)
        basis = [fl.random_solenoidal(grid, rng, kmax=kmax) for _ in range(m)]
    sv = pde.time_reverse(v, T)
    fwd = [pde.transport(b, v, T, cfg) for b in basis]
    lhs = np.zeros((len(basis),) * 2)
    rhs = np.zeros_like(lhs)
    if alpha == 0:
        dual = [pde.transport(fl.curl_inverse(b), sv, T, cfg) for b in basis]
        norms = [fl.norm_H(b) for b in basis]
        for i, bi in enumerate(basis):
            ci = fl.curl(bi)
            for j, bj in enumerate(basis):
                s = norms[i] * norms[j]
                lhs[i, j] = fl.inner_product_H(fwd[i], bj) / s
                rhs[i, j] = fl.inner_product_H(ci, dual[j]) / s
    else:
        curls = [fl.curl(b) for b in basis]
        dual = [pde.transport(c, sv, T, cfg) for c in curls]
        norms = [fl.norm_H(c) for c in curls]
        for i in range(len(basis)):
            cf = fl.curl(fwd[i])
            for j in range(len(basis)):
                s = norms[i] * norms[j]
                lhs[i, j] = fl.inner_product_H(cf, curls[j]) / s
                rhs[i, j] = fl.inner_product_H(curls[i], dual[j]) / s
    return float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs)))
