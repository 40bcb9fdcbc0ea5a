"""Periodic-torus vector calculus on uniform grids.

Spectral coefficients are normalized as c = fftn(f) / n_points, so that
f(x) = Re sum_m c_m exp(i k_m . x) with k_m = 2 pi m / L.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Grid:
    dim: int
    sizes: tuple
    box: tuple

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.sizes)
        box = tuple(float(b) for b in self.box)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "box", box)
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if len(sizes) != self.dim or len(box) != self.dim:
            raise ValueError("sizes and box must have one entry per axis")
        if any(n < 8 or n % 2 for n in sizes):
            raise ValueError(f"grid sizes must be even and >= 8, got {sizes}")
        if any(not np.isfinite(b) or b <= 0 for b in box):
            raise ValueError(f"box lengths must be positive, got {box}")

    @classmethod
    def cube(cls, dim: int, n: int, length: float = 2 * np.pi) -> "Grid":
        return cls(dim, (n,) * dim, (length,) * dim)

    @property
    def shape(self) -> tuple:
        return self.sizes

    @property
    def n_points(self) -> int:
        return int(np.prod(self.sizes))

    @property
    def volume(self) -> float:
        return float(np.prod(self.box))

    @property
    def cell_volume(self) -> float:
        return self.volume / self.n_points

    def axes(self) -> list:
        return [np.arange(n) * (L / n) for n, L in zip(self.sizes, self.box)]

    def coords(self) -> np.ndarray:
        """Node coordinates, shape (dim, *sizes)."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"))

    def nodes(self) -> np.ndarray:
        """Node coordinates flattened to (n_points, dim), C order."""
        return self.coords().reshape(self.dim, -1).T.copy()

    @cached_property
    def mode_index(self) -> tuple:
        """Signed integer mode numbers per axis, broadcastable."""
        out = []
        for a, n in enumerate(self.sizes):
            m = np.fft.fftfreq(n, 1.0 / n).astype(np.int64)
            shp = [1] * self.dim
            shp[a] = n
            out.append(m.reshape(shp))
        return tuple(out)

    @cached_property
    def wavenumbers(self) -> tuple:
        return tuple(2 * np.pi * m / L for m, L in zip(self.mode_index, self.box))

    @cached_property
    def k_eff(self) -> tuple:
        # Nyquist component zeroed for odd-order derivatives
        out = []
        for m, k, n in zip(self.mode_index, self.wavenumbers, self.sizes):
            out.append(np.where(np.abs(m) == n // 2, 0.0, k))
        return tuple(out)

    @cached_property
    def k2(self) -> np.ndarray:
        return sum(k**2 for k in self.k_eff)

    @cached_property
    def k2_full(self) -> np.ndarray:
        return sum(k**2 for k in self.wavenumbers)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        mask = np.ones(self.sizes, dtype=bool)
        for m, n in zip(self.mode_index, self.sizes):
            mask = mask & (np.abs(m) <= dealias_cutoff(n))
        return mask

    def to_dict(self) -> dict:
        return {"dim": self.dim, "sizes": list(self.sizes), "box": list(self.box)}


def dealias_cutoff(n: int) -> int:
    return int(np.ceil(n / 3)) - 1


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


class ScalarField:
    def __init__(self, grid: Grid, samples):
        samples = np.asarray(samples, dtype=float).reshape(grid.sizes)
        if not np.all(np.isfinite(samples)):
            raise ValueError("scalar field has non-finite samples")
        self.grid = grid
        self.samples = _frozen(samples)

    def __repr__(self):
        return f"ScalarField(sizes={self.grid.sizes})"

    def __add__(self, other):
        return ScalarField(self.grid, self.samples + _values(other))

    def __sub__(self, other):
        return ScalarField(self.grid, self.samples - _values(other))

    def __mul__(self, a: float):
        return ScalarField(self.grid, self.samples * a)

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.samples)


class VectorField:
    def __init__(self, grid: Grid, components):
        comps = np.asarray(components, dtype=float)
        if comps.shape[0] != grid.dim:
            raise ValueError(f"expected {grid.dim} components, got {comps.shape[0]}")
        comps = comps.reshape((grid.dim,) + grid.sizes)
        if not np.all(np.isfinite(comps)):
            raise ValueError("vector field has non-finite samples")
        self.grid = grid
        self.components = _frozen(comps)

    def __repr__(self):
        return f"VectorField(dim={self.grid.dim}, sizes={self.grid.sizes})"

    def __add__(self, other):
        _check_same(self, other)
        return VectorField(self.grid, self.components + other.components)

    def __sub__(self, other):
        _check_same(self, other)
        return VectorField(self.grid, self.components - other.components)

    def __mul__(self, a: float):
        return VectorField(self.grid, self.components * a)

    __rmul__ = __mul__

    def __truediv__(self, a: float):
        return VectorField(self.grid, self.components / a)

    def __neg__(self):
        return VectorField(self.grid, -self.components)

    def max_abs(self) -> float:
        return float(np.max(np.sqrt(np.sum(self.components**2, axis=0))))

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls(grid, np.zeros((grid.dim,) + grid.sizes))


def _values(x):
    return x.samples if isinstance(x, ScalarField) else x


def _check_same(f, g):
    if f.grid != g.grid:
        raise ValueError(f"grid mismatch: {f.grid} vs {g.grid}")


@dataclass(frozen=True)
class SpectralField:
    grid: Grid
    coefficients: np.ndarray  # (n_comp, *sizes) complex

    def hermitian_defect(self) -> float:
        c = self.coefficients
        axes = tuple(range(1, c.ndim))
        flipped = np.roll(np.flip(c, axis=axes), shift=1, axis=axes)
        return float(np.max(np.abs(c - np.conj(flipped))))


# transforms

def _fft(a: np.ndarray, grid: Grid) -> np.ndarray:
    axes = tuple(range(-grid.dim, 0))
    return np.fft.fftn(a, axes=axes) / grid.n_points


def _ifft(c: np.ndarray, grid: Grid) -> np.ndarray:
    axes = tuple(range(-grid.dim, 0))
    return np.fft.ifftn(c * grid.n_points, axes=axes).real


def transform_forward(f) -> SpectralField:
    if isinstance(f, ScalarField):
        return SpectralField(f.grid, _fft(f.samples[None], f.grid))
    return SpectralField(f.grid, _fft(f.components, f.grid))


def transform_inverse(s: SpectralField):
    vals = _ifft(s.coefficients, s.grid)
    if vals.shape[0] == s.grid.dim:
        return VectorField(s.grid, vals)
    if vals.shape[0] == 1:
        return ScalarField(s.grid, vals[0])
    raise ValueError("component count matches neither scalar nor vector field")


# spectral operators on coefficient arrays (n_comp, *sizes)

def project_hat(c: np.ndarray, grid: Grid) -> np.ndarray:
    k = grid.k_eff
    k2 = grid.k2
    inv = np.zeros_like(k2)
    np.divide(1.0, k2, out=inv, where=k2 > 0)
    div = sum(k[a] * c[a] for a in range(grid.dim))
    return np.stack([c[a] - k[a] * div * inv for a in range(grid.dim)])


def curl_hat(c: np.ndarray, grid: Grid) -> np.ndarray:
    k = grid.k_eff
    if grid.dim == 2:
        return (1j * (k[0] * c[1] - k[1] * c[0]))[None]
    return 1j * np.stack([
        k[1] * c[2] - k[2] * c[1],
        k[2] * c[0] - k[0] * c[2],
        k[0] * c[1] - k[1] * c[0],
    ])


def grad_hat(c: np.ndarray, grid: Grid) -> np.ndarray:
    """Gradient of each component: (n_comp, dim, *sizes), d_a c_i at [i, a]."""
    return np.stack([np.stack([1j * k * ci for k in grid.k_eff]) for ci in c])


def div_hat(c: np.ndarray, grid: Grid) -> np.ndarray:
    return sum(1j * grid.k_eff[a] * c[a] for a in range(grid.dim))


# public field operations

def helmholtz_project(f: VectorField) -> VectorField:
    c = project_hat(_fft(f.components, f.grid), f.grid)
    return VectorField(f.grid, _ifft(c, f.grid))


def divergence(f: VectorField) -> ScalarField:
    return ScalarField(f.grid, _ifft(div_hat(_fft(f.components, f.grid), f.grid)[None], f.grid)[0])


def gradient(phi: ScalarField) -> VectorField:
    c = _fft(phi.samples, phi.grid)
    return VectorField(phi.grid, _ifft(np.stack([1j * k * c for k in phi.grid.k_eff]), phi.grid))


def jacobian(f: VectorField) -> np.ndarray:
    """Samples of d_a f^i, shape (dim, dim, *sizes) indexed [i, a]."""
    return _ifft(grad_hat(_fft(f.components, f.grid), f.grid), f.grid)


def laplacian(f):
    g = f.grid
    if isinstance(f, ScalarField):
        return ScalarField(g, _ifft(-g.k2 * _fft(f.samples, g), g))
    return VectorField(g, _ifft(-g.k2 * _fft(f.components, g), g))


def curl(f: VectorField):
    """3D: vector curl. 2D: scalar rot d1 f2 - d2 f1."""
    c = curl_hat(_fft(f.components, f.grid), f.grid)
    vals = _ifft(c, f.grid)
    if f.grid.dim == 2:
        return ScalarField(f.grid, vals[0])
    return VectorField(f.grid, vals)


def curl_inverse(f: VectorField, tol: float = 1e-8) -> VectorField:
    g = f.grid
    if g.dim != 3:
        raise ValueError("curl_inverse is defined for dim = 3")
    c = _fft(f.components, g)
    scale = max(float(np.max(np.abs(c))), 1e-300)
    zero = g.k2 == 0
    if np.max(np.abs(c[:, zero])) > tol * scale and np.max(np.abs(c[:, zero])) > 1e-14:
        raise ValueError("curl_inverse requires a zero-mean field")
    div = np.max(np.abs(div_hat(c, g)))
    if div > tol * max(1.0, scale * np.sqrt(float(np.max(g.k2)))):
        raise ValueError(f"curl_inverse requires a divergence-free field (|div| = {div:.3e})")
    inv = np.zeros_like(g.k2)
    np.divide(1.0, g.k2, out=inv, where=~zero)
    out = curl_hat(c * inv, g)
    return VectorField(g, _ifft(out, g))


def perp_grad(phi: ScalarField) -> VectorField:
    """v = (-d2 phi, d1 phi)."""
    g = phi.grid
    if g.dim != 2:
        raise ValueError("perp_grad is defined for dim = 2")
    c = _fft(phi.samples, g)
    k = g.k_eff
    return VectorField(g, _ifft(np.stack([-1j * k[1] * c, 1j * k[0] * c]), g))


def cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pointwise cross product of component arrays (3, ...)."""
    return np.stack([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def inner_product_H(f: VectorField, g: VectorField) -> float:
    _check_same(f, g)
    return float(np.sum(f.components * g.components) * f.grid.cell_volume)


def norm_H(f: VectorField) -> float:
    return float(np.sqrt(max(inner_product_H(f, f), 0.0)))


def _norm_check(k: int):
    if k not in (-1, 0, 1, 2):
        raise ValueError(f"norm order must be in {{-1,0,1,2}}, got {k}")


def sobolev_norm(f: VectorField, k: int) -> float:
    """Inhomogeneous norm with weight (1 + |k|^2)^k."""
    _norm_check(k)
    g = f.grid
    c = _fft(f.components, g)
    w = (1.0 + g.k2_full) ** k
    return float(np.sqrt(g.volume * np.sum(w * np.abs(c) ** 2)))


def homogeneous_norm(f: VectorField, k: int) -> float:
    """Norm with Fourier weight |k|^(2k); equals ||curl^k f|| on divergence-free fields."""
    _norm_check(k)
    g = f.grid
    c = _fft(f.components, g)
    k2 = g.k2_full
    if k < 0:
        zero = k2 == 0
        if np.max(np.abs(c[:, zero])) > 1e-12 * max(float(np.max(np.abs(c))), 1e-300):
            raise ValueError("negative-order norm requires a zero-mean field")
        w = np.zeros_like(k2)
        np.divide(1.0, k2 ** (-k), out=w, where=~zero)
    else:
        w = k2**k
    return float(np.sqrt(g.volume * np.sum(w * np.abs(c) ** 2)))


# analytic recipes

def taylor_green_2d(grid: Grid, nu: float = 0.0, t: float = 0.0, amplitude: float = 1.0) -> VectorField:
    x, y = grid.coords()
    a = amplitude * np.exp(-2 * nu * t)
    return VectorField(grid, [-a * np.cos(x) * np.sin(y), a * np.sin(x) * np.cos(y)])


def abc_flow(grid: Grid, A: float = 1.0, B: float = 1.0, C: float = 1.0, nu: float = 0.0, t: float = 0.0) -> VectorField:
    x, y, z = grid.coords()
    d = np.exp(-nu * t)
    return VectorField(grid, [
        d * (A * np.sin(z) + C * np.cos(y)),
        d * (B * np.sin(x) + A * np.cos(z)),
        d * (C * np.sin(y) + B * np.cos(x)),
    ])


def single_mode(grid: Grid, mode: Sequence[int] = None, amplitude: Sequence[float] = None, phase: float = 0.0) -> VectorField:
    """amplitude * cos(k.x + phase) projected onto the plane orthogonal to k."""
    mode = np.array(mode if mode is not None else [1] + [0] * (grid.dim - 1), dtype=float)
    if amplitude is None:
        amplitude = np.zeros(grid.dim)
        amplitude[1 % grid.dim] = 1.0
    amp = np.array(amplitude, dtype=float)
    k = 2 * np.pi * mode / np.array(grid.box)
    amp = amp - k * (k @ amp) / max(k @ k, 1e-300)
    X = grid.coords()
    phase_field = np.tensordot(k, X, axes=1) + phase
    return VectorField(grid, np.stack([a * np.cos(phase_field) for a in amp]))


def shear(grid: Grid, amplitude: float = 1.0, mode: int = 1) -> VectorField:
    """u = amplitude * sin(2 pi mode y / L_y) e_1."""
    X = grid.coords()
    comps = np.zeros((grid.dim,) + grid.sizes)
    comps[0] = amplitude * np.sin(2 * np.pi * mode * X[1] / grid.box[1])
    return VectorField(grid, comps)


RECIPES = {
    "taylor_green_2d": taylor_green_2d,
    "abc_flow": abc_flow,
    "single_mode": single_mode,
    "shear": shear,
    "zero": lambda grid, **kw: VectorField.zeros(grid),
}

TIME_DEPENDENT = {"taylor_green_2d", "abc_flow"}


def analytic_field(recipe: str, grid: Grid, t: float = 0.0, **params) -> VectorField:
    if recipe not in RECIPES:
        raise ValueError(f"unknown recipe {recipe!r}; known: {sorted(RECIPES)}")
    if recipe == "taylor_green_2d" and grid.dim != 2:
        raise ValueError("taylor_green_2d needs a 2D grid (use embed_2d for 3D)")
    if recipe == "abc_flow" and grid.dim != 3:
        raise ValueError("abc_flow needs a 3D grid")
    if recipe in TIME_DEPENDENT:
        params = dict(params, t=t)
    return RECIPES[recipe](grid, **params)


def embed_2d(f: VectorField, nz: int = 8, lz: float = 2 * np.pi) -> VectorField:
    """z-independent 3D field (f1, f2, 0)."""
    g = f.grid
    g3 = Grid(3, g.sizes + (nz,), g.box + (lz,))
    comps = np.zeros((3,) + g3.sizes)
    comps[:2] = f.components[..., None]
    return VectorField(g3, comps)


def random_solenoidal(grid: Grid, rng: np.random.Generator, kmax: int = 3, decay: float = 1.0,
                      zero_mean: bool = True) -> VectorField:
    """Random band-limited divergence-free field with modes |m|_inf <= kmax."""
    c = np.zeros((grid.dim,) + grid.sizes, dtype=complex)
    band = np.ones(grid.sizes, dtype=bool)
    for m in grid.mode_index:
        band = band & (np.abs(m) <= kmax)
    k2 = grid.k2_full
    w = np.where(band, (1.0 + k2) ** (-decay / 2), 0.0)
    for a in range(grid.dim):
        c[a] = w * (rng.standard_normal(grid.sizes) + 1j * rng.standard_normal(grid.sizes))
    if zero_mean:
        c[:, k2 == 0] = 0.0
    # Hermitian symmetrization: take the real part in physical space
    vals = _ifft(c, grid)
    c = project_hat(_fft(vals, grid), grid)
    vals = _ifft(c, grid)
    return VectorField(grid, vals / max(np.sqrt(np.mean(vals**2)), 1e-300))


def random_scalar(grid: Grid, rng: np.random.Generator, kmax: int = 3) -> ScalarField:
    c = np.zeros(grid.sizes, dtype=complex)
    band = np.ones(grid.sizes, dtype=bool)
    for m in grid.mode_index:
        band = band & (np.abs(m) <= kmax)
    c[band] = rng.standard_normal(band.sum()) + 1j * rng.standard_normal(band.sum())
    vals = _ifft(c, grid)
    return ScalarField(grid, vals / max(np.sqrt(np.mean(vals**2)), 1e-300))


# off-grid evaluation

@dataclass(frozen=True)
class ModeTable:
    """Sparse half-spectrum: f(x) = Re sum_j coef[j] exp(i 2 pi idx[j] . x / L)."""
    idx: np.ndarray   # (M, dim) int64
    coef: np.ndarray  # (S, M, C) complex128, one row per time sample
    box: np.ndarray   # (dim,)
    times: np.ndarray  # (S,)

    @property
    def kmax(self) -> np.ndarray:
        if len(self.idx) == 0:
            return np.zeros(len(self.box), dtype=np.int64)
        return np.max(np.abs(self.idx), axis=0).astype(np.int64)

    def numba_args(self) -> tuple:
        return (np.ascontiguousarray(self.times, dtype=np.float64),
                np.ascontiguousarray(self.idx, dtype=np.int64),
                np.ascontiguousarray(self.coef, dtype=np.complex128),
                np.ascontiguousarray(2 * np.pi / self.box, dtype=np.float64),
                np.ascontiguousarray(self.kmax, dtype=np.int64))


def _extended_modes(c: np.ndarray, grid: Grid):
    """Split Nyquist planes symmetrically so the mode set is closed under m -> -m."""
    entries = {}
    nz = np.argwhere(np.any(c != 0, axis=0))
    for pos in nz:
        m = [int(grid.mode_index[a].ravel()[pos[a]]) for a in range(grid.dim)]
        val = c[(slice(None),) + tuple(pos)]
        nyq = [a for a in range(grid.dim) if abs(m[a]) == grid.sizes[a] // 2]
        variants = [tuple(m)]
        for a in nyq:
            variants = [v[:a] + (s,) + v[a + 1:] for v in variants for s in (abs(m[a]), -abs(m[a]))]
        share = val / (2 ** len(nyq))
        for v in variants:
            entries[v] = entries.get(v, 0) + share
    return entries


def mode_table(fields, times=None, rel_tol: float = 1e-15) -> ModeTable:
    """Build a shared mode table for one field or a time-ordered list of fields."""
    single = not isinstance(fields, (list, tuple))
    fields = [fields] if single else list(fields)
    grid = fields[0].grid
    specs = []
    for f in fields:
        arr = f.samples[None] if isinstance(f, ScalarField) else f.components
        c = _fft(arr, grid)
        scale = float(np.max(np.abs(c))) if c.size else 0.0
        c = np.where(np.abs(c) > rel_tol * scale, c, 0)
        specs.append(_extended_modes(c, grid))
    keys = set()
    for e in specs:
        keys.update(e)
    half = []
    for m in sorted(keys):
        nzc = [x for x in m if x != 0]
        if not nzc:
            half.append((m, 1.0))
        elif nzc[0] > 0:
            half.append((m, 2.0))
    n_comp = len(next(iter(specs[0].values()))) if specs[0] else (1 if isinstance(fields[0], ScalarField) else grid.dim)
    idx = np.array([m for m, _ in half], dtype=np.int64).reshape(-1, grid.dim)
    coef = np.zeros((len(specs), len(half), n_comp), dtype=complex)
    for s, e in enumerate(specs):
        for j, (m, w) in enumerate(half):
            if m in e:
                coef[s, j] = w * e[m]
    t = np.zeros(1) if times is None else np.asarray(times, dtype=float)
    if len(t) != len(specs):
        raise ValueError("times must match the number of fields")
    return ModeTable(idx, coef, np.array(grid.box), t)


def evaluate_at(f, points, t: float = 0.0, gradient: bool = False):
    """Truncated Fourier-series evaluation at arbitrary points (wrapped periodically)."""
    from ._kernels import eval_points
    table = f if isinstance(f, ModeTable) else mode_table(f)
    pts = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
    val, grad = eval_points(*table.numba_args(), pts, float(t), gradient)
    if isinstance(f, ScalarField):
        val = val[:, 0]
        grad = grad[:, 0]
    return (val, grad) if gradient else val
