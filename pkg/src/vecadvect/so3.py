"""so(3) / SO(3) calculus and residuals for the 3D rotation-field representation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import fields as fl
from ._kernels import correction_vec
from .fields import Grid, ScalarField, VectorField

SMALL_EXP = 1e-8
SMALL_CORR = 1e-6
BRANCH_MARGIN = 1e-6


class BranchError(ValueError):
    pass


def hat(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    out = np.zeros(a.shape[:-1] + (3, 3))
    out[..., 0, 1] = -a[..., 2]
    out[..., 0, 2] = a[..., 1]
    out[..., 1, 0] = a[..., 2]
    out[..., 1, 2] = -a[..., 0]
    out[..., 2, 0] = -a[..., 1]
    out[..., 2, 1] = a[..., 0]
    return out


def vee(M, tol: float = 1e-12) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if np.max(np.abs(M + np.swapaxes(M, -1, -2)), initial=0.0) > tol * max(1.0, np.max(np.abs(M), initial=0.0)):
        raise ValueError("vee needs an antisymmetric matrix")
    return np.stack([M[..., 2, 1], M[..., 0, 2], M[..., 1, 0]], axis=-1)


def _sinc_coeffs(th2):
    """sin(t)/t and (1 - cos t)/t^2 with 4-term Taylor series for small t."""
    th = np.sqrt(th2)
    small = th < SMALL_EXP
    safe = np.where(small, 1.0, th)
    s1 = np.where(small, 1 - th2 / 6 + th2**2 / 120 - th2**3 / 5040, np.sin(safe) / safe)
    s2 = np.where(small, 0.5 - th2 / 24 + th2**2 / 720 - th2**3 / 40320, 2 * np.sin(safe / 2) ** 2 / safe**2)
    return s1, s2


def exp_so3(a) -> np.ndarray:
    """Rodrigues: I + sin|a|/|a| hat(a) + (1 - cos|a|)/|a|^2 hat(a)^2."""
    a = np.asarray(a, dtype=float)
    A = hat(a)
    s1, s2 = _sinc_coeffs(np.sum(a * a, axis=-1))
    return np.eye(3) + s1[..., None, None] * A + s2[..., None, None] * (A @ A)


def bch(u, v, return_info: bool = False):
    """w with exp(hat w) = exp(hat u) exp(hat v), principal branch.

    Closed form w = alpha u + beta v + gamma (u x v); the angle of the
    composite rotation is taken from atan2 so it stays valid past pi/2.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    th = np.linalg.norm(u)
    ph = np.linalg.norm(v)
    lim = np.pi - BRANCH_MARGIN
    if th >= lim or ph >= lim:
        raise BranchError(f"|u| = {th:.6g}, |v| = {ph:.6g} outside the principal branch")
    if th == 0.0:
        return (v.copy(), {}) if return_info else v.copy()
    if ph == 0.0:
        return (u.copy(), {}) if return_info else u.copy()
    c = float(np.dot(u, v) / (th * ph))
    c = min(1.0, max(-1.0, c))
    sth, sph = np.sin(th), np.sin(ph)
    sh2, ch2 = np.sin(th / 2), np.cos(th / 2)
    sp2, cp2 = np.sin(ph / 2), np.cos(ph / 2)
    a1 = sth * cp2**2 - sph * sh2**2 * c
    b1 = sph * ch2**2 - sth * sp2**2 * c
    c1 = 0.5 * sth * sph - 2 * sh2**2 * sp2**2 * c
    d2 = a1**2 + b1**2 + 2 * a1 * b1 * c + c1**2 * (1 - c**2)
    d = np.sqrt(max(d2, 0.0))
    half = ch2 * cp2 - sh2 * sp2 * c  # cos of half the composite angle
    psi = np.arctan2(d, 2 * half**2 - 1)
    if psi >= lim:
        raise BranchError(f"composite angle {psi:.6g} too close to pi")
    f = psi / d if d > 1e-12 else 1.0 + d2 / 6.0
    alpha = f * a1 / th
    beta = f * b1 / ph
    gamma = f * c1 / (th * ph)
    w = alpha * u + beta * v + gamma * np.cross(u, v)
    if return_info:
        return w, {"alpha": alpha, "beta": beta, "gamma": gamma, "d": d, "angle": psi}
    return w


def log_so3(R) -> np.ndarray:
    """Principal-branch log via angle/axis extraction (reference oracle)."""
    R = np.asarray(R, dtype=float)
    cos = np.clip((np.trace(R) - 1) / 2, -1, 1)
    th = np.arccos(cos)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) / 2
    if th < 1e-12:
        return w
    if th > np.pi - 1e-6:
        vals, vecs = np.linalg.eigh((R + R.T) / 2)
        axis = vecs[:, np.argmax(vals)]
        return th * axis * (1 if np.dot(axis, w) >= 0 else -1)
    return th / np.sin(th) * w


class RotationField:
    """Smooth map x -> a(x) in R^3 with its Jacobian da^i/dx_k."""

    def __init__(self, func: Optional[Callable] = None, field: Optional[VectorField] = None):
        if (func is None) == (field is None):
            raise ValueError("give exactly one of func or field")
        self.func = func
        self.field = field

    @classmethod
    def from_grid(cls, field: VectorField) -> "RotationField":
        if field.grid.dim != 3:
            raise ValueError("rotation fields are 3D")
        return cls(field=field)

    @classmethod
    def random_trig(cls, rng: np.random.Generator, n_terms: int = 3, scale: float = 1.0, kmax: int = 2,
                    box: float = 2 * np.pi) -> "RotationField":
        """a^i(x) = sum_j A_ij sin(k_j . x + p_j), an analytic field with exact derivatives."""
        K = rng.integers(-kmax, kmax + 1, size=(n_terms, 3)) * (2 * np.pi / box)
        A = rng.normal(size=(n_terms, 3)) * scale
        P = rng.uniform(0, 2 * np.pi, size=n_terms)

        def func(x):
            x = np.atleast_2d(x)
            ph = x @ K.T + P
            val = np.sin(ph) @ A
            jac = np.einsum("pj,ji,jk->pik", np.cos(ph), A, K)
            return val, jac

        out = cls(func=func)
        out.params = (K, A, P)
        return out

    def value_and_jacobian(self, points):
        """a(x) of shape (P, 3) and jac[p, i, k] = d a^i / d x_k."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.func is not None:
            return self.func(pts)
        val, grad = fl.evaluate_at(self.field, pts, gradient=True)
        return val, grad

    def sample(self, grid: Grid) -> VectorField:
        val, _ = self.value_and_jacobian(grid.nodes())
        return VectorField(grid, val.T.reshape((3,) + grid.sizes))


def correction_from_derivative(a, da) -> np.ndarray:
    """hat^{-1} of exp(hat a)^T d exp(hat a) for a directional derivative da (vectorized)."""
    a = np.asarray(a, dtype=float).reshape(-1, 3)
    da = np.asarray(da, dtype=float).reshape(-1, 3)
    out = np.empty_like(a)
    buf = np.empty(3)
    for p in range(len(a)):
        correction_vec(np.ascontiguousarray(a[p]), np.ascontiguousarray(da[p]), buf)
        out[p] = buf
    return out


def correction_term(field: RotationField, x, k: int) -> np.ndarray:
    """sigma^T d_k sigma for sigma = exp(hat a(x)); returns a 3x3 antisymmetric matrix.

    Uses -(1 - cos|a|) hat(b x d_k b) + sin|a| hat(d_k b) + hat(b) d_k|a| with b = a/|a|,
    and a series branch below |a| = 1e-6.
    """
    a, jac = field.value_and_jacobian(np.reshape(x, (1, 3)))
    return hat(correction_from_derivative(a[0], jac[0][:, k])[0])


def correction_rewritten(a, da) -> np.ndarray:
    """-(1 - cos|a|) hat(b x db) + (sin|a| - |a|) hat(db) + hat(da)."""
    a = np.asarray(a, dtype=float)
    da = np.asarray(da, dtype=float)
    th = np.linalg.norm(a)
    b = a / th
    db = (da - b * np.dot(b, da)) / th
    return hat(-(1 - np.cos(th)) * np.cross(b, db) + (np.sin(th) - th) * db + da)


def _spectral_grad(s: ScalarField) -> np.ndarray:
    return fl.gradient(s).components


def representation_residual(b: VectorField, phi: ScalarField, psi: ScalarField, v: VectorField,
                            F: VectorField, nu: float) -> VectorField:
    """residual_k = (cos phi - 1)(curl F, b x d_k b) + sin phi (curl F, d_k b)
    + (curl F, b) d_k phi + d_k psi - (v x curl F)^k / nu."""
    g = F.grid
    if g.dim != 3:
        raise ValueError("representation_residual needs dim = 3")
    for f in (b, phi, psi, v):
        if f.grid != g:
            raise ValueError("all fields must share one grid")
    bb = b.components
    if np.max(np.abs(np.sum(bb * bb, axis=0) - 1)) > 1e-10:
        raise ValueError("b must be a unit vector field")
    w = fl.curl(F).components
    db = fl.jacobian(b)  # [i, k] = d_k b^i
    dphi = _spectral_grad(phi)
    dpsi = _spectral_grad(psi)
    p = phi.samples
    vxw = fl.cross(v.components, w)
    wb = np.sum(w * bb, axis=0)
    res = []
    for k in range(3):
        dbk = db[:, k]
        term = (np.cos(p) - 1) * np.sum(w * fl.cross(bb, dbk), axis=0)
        term = term + np.sin(p) * np.sum(w * dbk, axis=0)
        term = term + wb * dphi[k] + dpsi[k] - vxw[k] / nu
        res.append(term)
    return VectorField(g, np.stack(res))


def embedded_triple(phi1: ScalarField, nu: float, nz: int = 8, lz: float = 2 * np.pi):
    """(b, phi, psi, v) for a planar flow v = perp_grad(phi1) lifted to 3D: b = e3, phi = phi1 / nu, psi = 0."""
    g2 = phi1.grid
    v = fl.embed_2d(fl.perp_grad(phi1), nz, lz)
    g = v.grid
    lift = np.broadcast_to(phi1.samples[..., None], g.sizes)
    b = np.zeros((3,) + g.sizes)
    b[2] = 1.0
    return VectorField(g, b), ScalarField(g, lift / nu), ScalarField(g, np.zeros(g.sizes)), v


@dataclass
class ConnectionOneForm:
    """Co-vector fields a_i = sum_k coef[i, k] dx_k, i.e. A_k = hat(coef[:, k])."""
    grid: Grid
    coef: np.ndarray  # (3, 3, *sizes): [i, k]

    @classmethod
    def from_rotation_field(cls, field: RotationField, grid: Grid) -> "ConnectionOneForm":
        a, jac = field.value_and_jacobian(grid.nodes())
        coef = np.empty((3, 3, grid.n_points))
        for k in range(3):
            coef[:, k] = correction_from_derivative(a, jac[:, :, k]).T
        return cls(grid, coef.reshape((3, 3) + grid.sizes))

    @classmethod
    def zeros(cls, grid: Grid) -> "ConnectionOneForm":
        return cls(grid, np.zeros((3, 3) + grid.sizes))

    def matrices(self) -> np.ndarray:
        """A_k as (3, *sizes, 3, 3) antisymmetric matrices."""
        return np.stack([hat(np.moveaxis(self.coef[:, k], 0, -1)) for k in range(3)])


_PAIRS = ((1, 2), (2, 0), (0, 1))  # 2-form components (23), (31), (12)


def _d(f: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    c = fl._fft(f, grid)
    return fl._ifft(1j * grid.k_eff[axis] * c, grid)


def flat_connection_residual(A: ConnectionOneForm) -> np.ndarray:
    """Residuals da_1 - a_3^a_2, da_2 - a_1^a_3, da_3 - a_2^a_1.

    Returned shape (3, 3, *sizes): [i, c] is the c-th 2-form component
    ((23), (31), (12)) of the i-th equation.
    """
    g = A.grid
    a = A.coef
    partner = {0: (2, 1), 1: (0, 2), 2: (1, 0)}
    out = np.empty((3, 3) + g.sizes)
    for i in range(3):
        p, q = partner[i]
        for c, (j, k) in enumerate(_PAIRS):
            da = _d(a[i, k], g, j) - _d(a[i, j], g, k)
            wedge = a[p, j] * a[q, k] - a[p, k] * a[q, j]
            out[i, c] = da - wedge
    return out


def exp_series(a, terms: int = 20, squarings: int = 3) -> np.ndarray:
    """Oracle: truncated Taylor series of exp(hat(a) / 2^s), squared s times."""
    A = hat(a) / 2**squarings
    out = np.eye(3)
    term = np.eye(3)
    for k in range(1, terms):
        term = term @ A / k
        out = out + term
    for _ in range(squarings):
        out = out @ out
    return out


def self_check(seed: int = 0, n_exp: int = 200, n_pairs: int = 1000, n_fields: int = 100,
               h: float = 1e-5) -> dict:
    """exp vs series, BCH vs the log oracle, correction term vs central differences, branch continuity."""
    rng = np.random.default_rng(seed)

    def ball(r):
        x = rng.normal(size=3)
        return x * rng.uniform(0, r) / np.linalg.norm(x)

    exp_err = max(float(np.max(np.abs(exp_so3(a) - exp_series(a)))) for a in [ball(3.0) for _ in range(n_exp)])
    bch_err = 0.0
    for _ in range(n_pairs):
        u, v = ball(1.0), ball(1.0)
        bch_err = max(bch_err, float(np.max(np.abs(bch(u, v) - log_so3(exp_so3(u) @ exp_so3(v))))))
    fd_err = 0.0
    for _ in range(n_fields):
        f = RotationField.random_trig(rng)
        x = rng.uniform(0, 2 * np.pi, 3)
        k = int(rng.integers(3))
        e = np.eye(3)[k]
        S = lambda y: exp_so3(f.value_and_jacobian(np.reshape(y, (1, 3)))[0][0])
        fd = S(x).T @ (S(x + h * e) - S(x - h * e)) / (2 * h)
        fd_err = max(fd_err, float(np.max(np.abs(correction_term(f, x, k) - fd))))
    branch = 0.0
    for _ in range(20):
        b = ball(1.0)
        b /= np.linalg.norm(b)
        da = rng.normal(size=3)
        for edge in (SMALL_CORR, SMALL_EXP):
            lo, hi = b * edge * (1 - 1e-9), b * edge * (1 + 1e-9)
            branch = max(branch, float(np.max(np.abs(correction_from_derivative(lo, da) - correction_from_derivative(hi, da)))))
            branch = max(branch, float(np.max(np.abs(exp_so3(lo) - exp_so3(hi)))))
    return {"exp_vs_series": exp_err, "bch_vs_log": bch_err, "correction_vs_fd": fd_err,
            "branch_jump": branch,
            "passed": bool(exp_err <= 1e-12 and bch_err <= 1e-8 and fd_err <= 1e-6 and branch <= 1e-9)}
