"""Link-cell binning and Verlet neighbor lists (open boundary)."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import ParticleSystem

DEFAULT_SKIN = 2.0

# half of the 27-cell stencil: self plus 13 forward neighbours
_HALF_STENCIL = [d for d in itertools.product((-1, 0, 1), repeat=3) if d > (0, 0, 0)]


@dataclass(frozen=True, eq=False)
class CellGrid:
    cell_edge: float
    origin: np.ndarray
    dims: tuple[int, int, int]
    atom_cells: np.ndarray  # (n, 3) integer cell coordinates
    bins: dict[tuple[int, int, int], np.ndarray]


@dataclass(frozen=True, eq=False)
class NeighborList:
    """Pairs ``(i[k], j[k])`` with ``i < j``, sorted lexicographically."""

    cutoff: float
    skin: float
    i: np.ndarray
    j: np.ndarray
    build_positions: np.ndarray

    @property
    def n_pairs(self) -> int:
        return len(self.i)

    @property
    def pairs(self) -> list[np.ndarray]:
        """Per-atom arrays of neighbour indices ``j > i``."""
        n = len(self.build_positions)
        starts = np.searchsorted(self.i, np.arange(n + 1))
        return [self.j[starts[a]:starts[a + 1]] for a in range(n)]


def _positions(system) -> np.ndarray:
    return system.positions if isinstance(system, ParticleSystem) else np.asarray(system, float)


def build_cell_grid(system, cell_edge: float) -> CellGrid:
    if cell_edge <= 0:
        raise ValueError("cell_edge must be positive")
    pos = _positions(system)
    if not np.all(np.isfinite(pos)):
        raise ValueError("cannot bin non-finite positions")
    origin = pos.min(axis=0)
    span = pos.max(axis=0) - origin
    dims = tuple(int(d) for d in np.maximum(1, np.floor(span / cell_edge).astype(int) + 1))
    cells = np.floor((pos - origin) / cell_edge).astype(np.int64)
    cells = np.clip(cells, 0, np.array(dims) - 1)
    flat = np.ravel_multi_index(cells.T, dims)
    order = np.argsort(flat, kind="stable")
    uniq, first = np.unique(flat[order], return_index=True)
    bounds = np.append(first, len(order))
    bins = {}
    for u, a, b in zip(uniq, bounds[:-1], bounds[1:]):
        bins[tuple(int(c) for c in np.unravel_index(u, dims))] = order[a:b]
    return CellGrid(float(cell_edge), origin, dims, cells, bins)


def build_neighbor_list(system, cutoff: float, skin: float = DEFAULT_SKIN) -> NeighborList:
    """All pairs within ``cutoff + skin``, found through a 27-cell stencil."""
    if cutoff <= 0 or skin < 0:
        raise ValueError("need cutoff > 0 and skin >= 0")
    pos = _positions(system)
    reach = cutoff + skin
    grid = build_cell_grid(pos, reach)
    reach2 = reach * reach
    out_i, out_j = [], []
    for cell, members in grid.bins.items():
        if len(members) > 1:
            d = pos[members][:, None, :] - pos[members][None, :, :]
            a, b = np.nonzero(np.triu(np.einsum("abk,abk->ab", d, d) <= reach2, k=1))
            out_i.append(members[a])
            out_j.append(members[b])
        for off in _HALF_STENCIL:
            other = grid.bins.get((cell[0] + off[0], cell[1] + off[1], cell[2] + off[2]))
            if other is None:
                continue
            d = pos[members][:, None, :] - pos[other][None, :, :]
            a, b = np.nonzero(np.einsum("abk,abk->ab", d, d) <= reach2)
            out_i.append(members[a])
            out_j.append(other[b])
    if out_i:
        ii = np.concatenate(out_i)
        jj = np.concatenate(out_j)
    else:
        ii = jj = np.zeros(0, dtype=np.int64)
    lo, hi = np.minimum(ii, jj), np.maximum(ii, jj)
    order = np.lexsort((hi, lo))
    return NeighborList(float(cutoff), float(skin), lo[order], hi[order], pos.copy())


def list_valid(nlist: NeighborList, system) -> bool:
    """True while every atom has moved less than half the skin since the build."""
    pos = _positions(system)
    if pos.shape != nlist.build_positions.shape:
        return False
    moved = np.linalg.norm(pos - nlist.build_positions, axis=1)
    return bool(np.all(moved < 0.5 * nlist.skin)) if nlist.skin > 0 else bool(np.all(moved == 0))


def brute_force_pairs(positions, reach: float) -> set[tuple[int, int]]:
    """O(N^2) reference enumeration of pairs with distance <= reach."""
    pos = np.asarray(positions, float)
    d = np.linalg.norm(pos[:, None] - pos[None, :], axis=-1)
    a, b = np.nonzero(np.triu(d <= reach, k=1))
    return set(zip(a.tolist(), b.tolist()))
