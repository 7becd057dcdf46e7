# Uniform cell-centered grids on the unit interval / unit square.

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Mesh", "Partition", "boundary_distance", "region_split"]


class MeshArgumentError(ValueError):
    """Invalid mesh, cell index, or partition argument."""


@dataclass(frozen=True)
class Mesh:
    """Uniform grid on (0,1)^dim with n_cells_per_side cells per axis.

    Coefficients live at cell centers ((i+1/2)h per axis), solutions at
    interior lattice nodes (i*h), gradients on the faces between nodes.
    """

    dim: int
    n_cells_per_side: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise MeshArgumentError(f"dim must be 1 or 2, got {self.dim}")
        if self.n_cells_per_side < 2:
            raise MeshArgumentError(
                f"n_cells_per_side must be >= 2, got {self.n_cells_per_side}")

    @property
    def n(self) -> int:
        return self.n_cells_per_side

    @property
    def h(self) -> float:
        return 1.0 / self.n_cells_per_side

    @property
    def cell_shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def node_shape(self) -> tuple:
        """Shape of the interior-node array (boundary nodes excluded)."""
        return (self.n - 1,) * self.dim

    def cell_centers_1d(self) -> np.ndarray:
        """Per-axis cell-center coordinates (i+1/2)h, i = 0..N-1."""
        return (np.arange(self.n) + 0.5) * self.h

    def node_coords_1d(self) -> np.ndarray:
        """Per-axis interior-node coordinates i*h, i = 1..N-1."""
        return np.arange(1, self.n) * self.h

    def boundary_distances(self) -> np.ndarray:
        """dist(x, boundary) at every cell center, shaped like cells."""
        x = self.cell_centers_1d()
        axis_dist = np.minimum(x, 1.0 - x)
        if self.dim == 1:
            return axis_dist
        return np.minimum(axis_dist[:, None], axis_dist[None, :])


def boundary_distance(mesh: Mesh, cell) -> float:
    """Distance from the center of one cell to the boundary of (0,1)^d.

    cell is an int for dim 1 and an (i, j) pair for dim 2.
    """
    idx = np.atleast_1d(np.asarray(cell, dtype=np.int64))
    if idx.shape != (mesh.dim,):
        raise MeshArgumentError(
            f"cell index {cell!r} does not match mesh dim {mesh.dim}")
    if np.any(idx < 0) or np.any(idx >= mesh.n):
        raise MeshArgumentError(f"cell index {cell!r} out of range for N={mesh.n}")
    x = (idx + 0.5) * mesh.h
    return float(np.min(np.minimum(x, 1.0 - x)))


def region_split(mesh: Mesh, rho: float):
    """Split cells into (dist >= rho, dist < rho) boolean masks.

    The first mask is the discrete D_rho, the second its complement; the
    complement's measure behaves like count*h^d <= 2*d*rho + O(h).
    """
    if rho < 0:
        raise MeshArgumentError(f"rho must be >= 0, got {rho}")
    dist = mesh.boundary_distances()
    far = dist >= rho
    return far, ~far


@dataclass(frozen=True)
class Partition:
    """Partition of the mesh cells into n^d congruent subcubes.

    Requires n to divide the mesh cell count per side so every subcube
    holds exactly (N/n)^d cells.
    """

    mesh: Mesh
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise MeshArgumentError(f"partition n must be >= 1, got {self.n}")
        if self.mesh.n % self.n != 0:
            raise MeshArgumentError(
                f"mesh N={self.mesh.n} not divisible by partition n={self.n}")

    @property
    def cells_per_side(self) -> int:
        return self.mesh.n // self.n

    @property
    def n_subcubes(self) -> int:
        return self.n ** self.mesh.dim

    def subcube_of_cells(self) -> np.ndarray:
        """Subcube index Q for every mesh cell, shaped like cells."""
        m = self.cells_per_side
        q1 = np.arange(self.mesh.n) // m
        if self.mesh.dim == 1:
            return q1
        return q1[:, None] * self.n + q1[None, :]

    def cell_mask(self, q: int) -> np.ndarray:
        """Boolean mask of the mesh cells belonging to subcube q."""
        if not 0 <= q < self.n_subcubes:
            raise MeshArgumentError(f"subcube index {q} out of range")
        return self.subcube_of_cells() == q

    def subcube_center(self, q: int) -> np.ndarray:
        """Physical center of subcube q."""
        if not 0 <= q < self.n_subcubes:
            raise MeshArgumentError(f"subcube index {q} out of range")
        side = 1.0 / self.n
        if self.mesh.dim == 1:
            return np.array([(q + 0.5) * side])
        return np.array([(q // self.n + 0.5) * side, (q % self.n + 0.5) * side])
