"""Multilevel summation of the Coulomb sum on nested, open-boundary grids.

The kernel 1/r is split into a short-range part g* (zero beyond the cutoff
``a``) and progressively smoother parts g^0 .. g^{l-1}. Level ``k`` has
spacing ``2^k h``; its nodes sit at integer multiples of that spacing, so
every coarse node coincides with a fine node and the lattice never moves
with the atoms.

Pipeline: anterpolate -> (restrict, lattice cutoff)* -> top level ->
prolongate* -> interpolate. Forces differentiate the interpolated energy
analytically through the basis functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import binom

from .core import ConfigurationError, CoverageError, ForceReport, ParticleSystem, SingularityError
from .neighbor import NeighborList
from .potentials import _ensure_list, accumulate_pairs, pair_geometry


@dataclass(frozen=True)
class MsmParams:
    """``a`` finest cutoff, ``h`` finest spacing, ``levels`` grid count (None: from box),
    ``m`` smoothing half-degree, ``p`` basis degree."""

    a: float = 12.0
    h: float = 2.0
    levels: int | None = None
    m: int = 2
    p: int = 3

    def __post_init__(self):
        if self.a <= 0 or self.h <= 0:
            raise ConfigurationError("MSM needs a > 0 and h > 0")
        if self.levels is not None and self.levels < 1:
            raise ConfigurationError("MSM needs at least one level")
        if self.m < 1:
            raise ConfigurationError("smoothing degree m must be >= 1")
        if self.p != 3:
            raise ConfigurationError(f"only the cubic basis (p=3) is implemented, got p={self.p}")

    def n_levels(self, box_edge: float) -> int:
        if self.levels is not None:
            return self.levels
        return max(1, int(math.floor(math.log2(box_edge / self.a)))) if box_edge > self.a else 1


# -- smoothing and splitting ------------------------------------------------


@lru_cache(maxsize=None)
def _taylor_coefficients(m: int) -> tuple[float, ...]:
    return tuple(float(binom(-0.5, n)) for n in range(m + 1))


def gamma(rho, m: int = 2):
    """Taylor smoothing of 1/rho: polynomial in rho^2 below 1, exactly 1/rho above."""
    rho = np.asarray(rho, float)
    t = rho * rho - 1.0
    poly = np.zeros_like(rho)
    for c in reversed(_taylor_coefficients(m)):
        poly = poly * t + c
    with np.errstate(divide="ignore"):
        out = np.where(rho < 1.0, poly, 1.0 / np.maximum(rho, 1.0))
    return out if out.ndim else float(out)


def gamma_deriv(rho, m: int = 2):
    rho = np.asarray(rho, float)
    t = rho * rho - 1.0
    coef = _taylor_coefficients(m)
    dpoly = np.zeros_like(rho)
    for n in range(m, 0, -1):
        dpoly = dpoly * t + n * coef[n]
    out = np.where(rho < 1.0, 2.0 * rho * dpoly, -1.0 / np.maximum(rho, 1.0) ** 2)
    return out if out.ndim else float(out)


def smoothed(r, scale: float, m: int = 2):
    """(1/scale) gamma(r/scale), the smooth part of 1/r at cutoff ``scale``."""
    return gamma(np.asarray(r, float) / scale, m) / scale


def level_kernel(r, k: int, n_levels: int, a: float, m: int = 2):
    """g^k(r); the last level keeps the full smooth tail."""
    scale = (2.0 ** k) * a
    if k == n_levels - 1:
        return smoothed(r, scale, m)
    return smoothed(r, scale, m) - smoothed(r, 2.0 * scale, m)


def kernel_split(r: float, params: MsmParams, n_levels: int | None = None):
    """Return ``(g_star, [g^0, ..., g^{l-1}])`` with g_star + sum(g^k) == 1/r."""
    if r <= 0:
        raise SingularityError("kernel_split needs r > 0")
    l = params.levels if n_levels is None else n_levels
    if l is None:
        raise ConfigurationError("number of levels not fixed")
    g_star = 1.0 / r - smoothed(r, params.a, params.m)
    return float(g_star), [float(level_kernel(r, k, l, params.a, params.m)) for k in range(l)]


# -- nodal basis ------------------------------------------------------------


def phi(xi, p: int = 3):
    """Cubic cardinal interpolant with support [-2, 2]."""
    if p != 3:
        raise ConfigurationError(f"basis degree p={p} not supported")
    x = np.abs(np.asarray(xi, float))
    inner = (1.0 - x) * (1.0 + x - 1.5 * x * x)
    outer = -0.5 * (x - 1.0) * (2.0 - x) ** 2
    out = np.where(x <= 1.0, inner, np.where(x <= 2.0, outer, 0.0))
    return out if out.ndim else float(out)


def phi_deriv(xi, p: int = 3):
    if p != 3:
        raise ConfigurationError(f"basis degree p={p} not supported")
    xi = np.asarray(xi, float)
    x = np.abs(xi)
    inner = -5.0 * x + 4.5 * x * x
    outer = -0.5 * (2.0 - x) * (4.0 - 3.0 * x)
    out = np.sign(xi) * np.where(x <= 1.0, inner, np.where(x <= 2.0, outer, 0.0))
    return out if out.ndim else float(out)


# -- grids ------------------------------------------------------------------


@dataclass(eq=False)
class GridLevel:
    index: int
    spacing: float
    lo: np.ndarray  # absolute lattice index of the first node per axis
    dims: tuple[int, int, int]
    charges: np.ndarray = field(repr=False)
    cutoff_potentials: np.ndarray | None = field(default=None, repr=False)
    potentials: np.ndarray | None = field(default=None, repr=False)

    @property
    def origin(self) -> np.ndarray:
        return self.lo * self.spacing

    def node_axes(self) -> list[np.ndarray]:
        return [(self.lo[ax] + np.arange(self.dims[ax])) * self.spacing for ax in range(3)]


@dataclass(eq=False)
class GridHierarchy:
    params: MsmParams
    levels: list[GridLevel]

    @property
    def n_levels(self) -> int:
        return len(self.levels)


def build_hierarchy(system: ParticleSystem, params: MsmParams,
                    n_levels: int | None = None) -> GridHierarchy:
    """Grids covering every atom plus a two-node margin on each level."""
    l = params.n_levels(float(system.box.max())) if n_levels is None else n_levels
    pos = system.positions
    lo = np.floor(pos.min(axis=0) / params.h).astype(np.int64) - 2
    hi = np.floor(pos.max(axis=0) / params.h).astype(np.int64) + 3
    levels = []
    for k in range(l):
        dims = tuple(int(d) for d in hi - lo + 1)
        levels.append(GridLevel(k, params.h * 2 ** k, lo.copy(), dims, np.zeros(dims)))
        lo = np.floor_divide(lo, 2) - 1
        hi = -np.floor_divide(-hi, 2) + 1
    return GridHierarchy(params, levels)


def _stencil(x: np.ndarray, level: GridLevel, p: int):
    """Per-axis node offsets (into the level array), weights and d(weight)/dx."""
    t = x / level.spacing
    base = np.floor(t).astype(np.int64) - 1
    nodes = base[:, :, None] + np.arange(4)[None, None, :]  # (n, 3, 4)
    xi = t[:, :, None] - nodes
    idx = nodes - level.lo[None, :, None]
    dims = np.array(level.dims)[None, :, None]
    if np.any(idx < 0) or np.any(idx >= dims):
        raise CoverageError(f"atoms fall outside grid level {level.index}")
    return idx, phi(xi, p), phi_deriv(xi, p) / level.spacing


def anterpolate(system: ParticleSystem, hierarchy: GridHierarchy) -> np.ndarray:
    """Spread atom charges onto the finest grid."""
    level = hierarchy.levels[0]
    idx, w, _ = _stencil(system.positions, level, hierarchy.params.p)
    wq = (system.charges[:, None, None, None] * w[:, 0, :, None, None]
          * w[:, 1, None, :, None] * w[:, 2, None, None, :])
    flat = np.ravel_multi_index(
        (idx[:, 0, :, None, None], idx[:, 1, None, :, None], idx[:, 2, None, None, :]), level.dims)
    size = int(np.prod(level.dims))
    level.charges = np.bincount(flat.ravel(), wq.ravel(), size).reshape(level.dims)
    return level.charges


@lru_cache(maxsize=256)
def _transfer_matrix(lo_f: int, n_f: int, lo_c: int, n_c: int, p: int) -> np.ndarray:
    """(n_c, n_f) weights phi(i/2 - j) from fine nodes i to coarse nodes j."""
    i = lo_f + np.arange(n_f)
    j = lo_c + np.arange(n_c)
    mat = phi(i[None, :] / 2.0 - j[:, None], p)
    if n_f and np.any(np.abs(mat.sum(axis=0) - 1.0) > 1e-12):
        raise CoverageError("fine grid not covered by the next coarser grid")
    mat.setflags(write=False)
    return mat


def _transfer_matrices(fine: GridLevel, coarse: GridLevel, p: int):
    return [_transfer_matrix(int(fine.lo[ax]), fine.dims[ax], int(coarse.lo[ax]),
                             coarse.dims[ax], p) for ax in range(3)]


def _apply_separable(mats, arr: np.ndarray) -> np.ndarray:
    out = np.einsum("ai,ijk->ajk", mats[0], arr)
    out = np.einsum("bj,ajk->abk", mats[1], out)
    return np.einsum("ck,abk->abc", mats[2], out)


def restrict(hierarchy: GridHierarchy, k: int) -> np.ndarray:
    """Move level-k node charges onto level k+1."""
    fine, coarse = hierarchy.levels[k], hierarchy.levels[k + 1]
    mats = _transfer_matrices(fine, coarse, hierarchy.params.p)
    coarse.charges = _apply_separable(mats, fine.charges)
    return coarse.charges


@lru_cache(maxsize=64)
def _kernel_cube(radius: tuple[int, int, int], spacing: float, k: int, n_levels: int,
                 a: float, m: int) -> np.ndarray:
    axes = [np.arange(-r, r + 1) * spacing for r in radius]
    dist = np.sqrt(axes[0][:, None, None] ** 2 + axes[1][None, :, None] ** 2
                   + axes[2][None, None, :] ** 2)
    cube = level_kernel(dist, k, n_levels, a, m)
    cube.setflags(write=False)
    return cube


def _convolve_centered(q: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    full = fftconvolve(q, kernel, mode="full")
    r = [(s - 1) // 2 for s in kernel.shape]
    return full[r[0]:r[0] + q.shape[0], r[1]:r[1] + q.shape[1], r[2]:r[2] + q.shape[2]]


def lattice_cutoff(hierarchy: GridHierarchy, k: int, params: MsmParams | None = None) -> np.ndarray:
    """Level-k node potentials from g^k, truncated where g^k vanishes (2^{k+1} a)."""
    params = params or hierarchy.params
    level = hierarchy.levels[k]
    radius = int(math.ceil(2.0 * params.a / params.h))
    cube = _kernel_cube((radius,) * 3, level.spacing, k, hierarchy.n_levels, params.a, params.m)
    level.cutoff_potentials = _convolve_centered(level.charges, cube)
    return level.cutoff_potentials


def top_level(hierarchy: GridHierarchy, params: MsmParams | None = None) -> np.ndarray:
    """Untruncated node-pair sum on the coarsest grid."""
    params = params or hierarchy.params
    level = hierarchy.levels[-1]
    radius = tuple(d - 1 for d in level.dims)
    cube = _kernel_cube(radius, level.spacing, hierarchy.n_levels - 1, hierarchy.n_levels,
                        params.a, params.m)
    level.potentials = _convolve_centered(level.charges, cube)
    return level.potentials


def prolongate(hierarchy: GridHierarchy, k: int) -> np.ndarray:
    """u^k = u^{k,cutoff} + interpolation of u^{k+1} onto level k."""
    fine, coarse = hierarchy.levels[k], hierarchy.levels[k + 1]
    mats = [m.T for m in _transfer_matrices(fine, coarse, hierarchy.params.p)]
    fine.potentials = fine.cutoff_potentials + _apply_separable(mats, coarse.potentials)
    return fine.potentials


def interpolate(system: ParticleSystem, hierarchy: GridHierarchy):
    """Finest-grid potential at each atom and its gradient with respect to the atom."""
    level = hierarchy.levels[0]
    idx, w, dw = _stencil(system.positions, level, hierarchy.params.p)
    u = level.potentials[idx[:, 0, :, None, None], idx[:, 1, None, :, None],
                         idx[:, 2, None, None, :]]  # (n, 4, 4, 4)
    wx, wy, wz = w[:, 0], w[:, 1], w[:, 2]
    dx, dy, dz = dw[:, 0], dw[:, 1], dw[:, 2]
    value = np.einsum("nabc,na,nb,nc->n", u, wx, wy, wz)
    grad = np.stack([
        np.einsum("nabc,na,nb,nc->n", u, dx, wy, wz),
        np.einsum("nabc,na,nb,nc->n", u, wx, dy, wz),
        np.einsum("nabc,na,nb,nc->n", u, wx, wy, dz),
    ], axis=1)
    return value, grad


def grid_potentials(system: ParticleSystem, params: MsmParams,
                    n_levels: int | None = None) -> GridHierarchy:
    """Run the grid pipeline up to finest-level node potentials."""
    hier = build_hierarchy(system, params, n_levels)
    anterpolate(system, hier)
    for k in range(hier.n_levels - 1):
        restrict(hier, k)
        lattice_cutoff(hier, k)
    top_level(hier)
    for k in range(hier.n_levels - 2, -1, -1):
        prolongate(hier, k)
    return hier


def msm_energy_forces(system: ParticleSystem, params: MsmParams,
                      nlist: NeighborList | None = None,
                      n_levels: int | None = None) -> ForceReport:
    """Short-range g* pair sum plus the grid part.

    The grid part includes each charge's interaction with itself; the exact
    self energy q^2 gamma(0)/(2a) is removed as a constant, and the smooth
    part of every bonded (excluded) pair is removed analytically.
    """
    n = system.n
    q = system.charges
    kc = system.units.coulomb_k
    if not np.any(q):
        return ForceReport.zeros(n)
    a, m = params.a, params.m

    nlist = _ensure_list(system, nlist, a)
    i, j, d, r = pair_geometry(system, nlist.i, nlist.j, a)
    qq = kc * q[i] * q[j]
    g_star = 1.0 / r - smoothed(r, a, m)
    dg_star = -1.0 / r ** 2 - gamma_deriv(r / a, m) / a ** 2
    short = accumulate_pairs(n, i, j, d, r, qq * g_star, qq * dg_star, "coulomb_short")

    hier = grid_potentials(system, params, n_levels)
    u_long, grad = interpolate(system, hier)
    self_energy = 0.5 * kc * q ** 2 * gamma(0.0, m) / a
    per_atom = 0.5 * kc * q * u_long - self_energy
    forces = -kc * q[:, None] * grad
    long_range = ForceReport.single("coulomb_long", forces, per_atom, float(per_atom.sum()))

    if system.bonds:
        bi, bj = np.divmod(system.excluded_keys(), n)
        bi, bj, bd, br = pair_geometry(system, bi, bj, exclude_bonded=False)
        bqq = kc * q[bi] * q[bj]
        correction = accumulate_pairs(n, bi, bj, bd, br, -bqq * smoothed(br, a, m),
                                      -bqq * gamma_deriv(br / a, m) / a ** 2, "coulomb_long")
        long_range = long_range + correction
    return short + long_range
