"""Periodic structured grids on the unit cell [0,1]^d.

The unit cell is discretised with a regular grid of Q1 (multilinear)
quadrilateral/hexahedral elements. Opposite faces are identified, so a grid
with ``cells_per_axis = (n1, ..., nd)`` has exactly ``prod(n)`` unique nodes
and the same number of elements; there are no duplicated boundary nodes.
All integration uses 2-point Gauss quadrature per axis, which is exact for
products of Q1 gradients on affine elements.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

GAUSS_1D = (0.5 * (1.0 - 1.0 / np.sqrt(3.0)), 0.5 * (1.0 + 1.0 / np.sqrt(3.0)))


@dataclass(frozen=True)
class Quadrature:
    """Tensor-product Gauss rule on the reference element [0,1]^d.

    Weights sum to 1 (the reference-element volume); element volume is
    applied separately during integration.
    """

    points: NDArray  # (nq, dim)
    weights: NDArray  # (nq,)

    @property
    def npoints(self) -> int:
        return len(self.weights)


def _gauss(dim: int) -> Quadrature:
    pts = np.array(list(itertools.product(GAUSS_1D, repeat=dim)))
    wts = np.full(len(pts), 0.5**dim)
    return Quadrature(points=pts, weights=wts)


@dataclass(frozen=True)
class PeriodicGrid:
    """Structured periodic grid over [0,1]^d with Q1 elements.

    Attributes
    ----------
    dim : 2 or 3.
    cells_per_axis : number of elements along each axis.
    conn : (nelem, 2**dim) periodic node indices of each element, ordered so
        that local node ``l`` has corner offsets ``bits(l)`` with bit ``a``
        addressing axis ``a``.
    node_coords : (nnode, dim) coordinates in [0,1)^d.
    """

    dim: int
    cells_per_axis: tuple[int, ...]
    conn: NDArray = field(repr=False)
    node_coords: NDArray = field(repr=False)
    quadrature: Quadrature = field(repr=False)
    # Q1 shape values (nq, nloc) and reference gradients (nq, nloc, dim)
    shape_values: NDArray = field(repr=False)
    shape_grads: NDArray = field(repr=False)

    @property
    def node_count(self) -> int:
        return int(np.prod(self.cells_per_axis))

    @property
    def nelem(self) -> int:
        return int(np.prod(self.cells_per_axis))

    @property
    def nloc(self) -> int:
        return 2**self.dim

    @property
    def spacings(self) -> NDArray:
        return 1.0 / np.asarray(self.cells_per_axis, dtype=float)

    @property
    def element_size(self) -> float:
        """Maximum side length of an element."""
        return float(self.spacings.max())

    @property
    def element_volume(self) -> float:
        return float(np.prod(self.spacings))

    @property
    def vector_conn(self) -> NDArray:
        """(nelem, nloc*dim) displacement dof indices, dofs interleaved per node."""
        d = self.dim
        vc = self.conn[:, :, None] * d + np.arange(d)[None, None, :]
        return vc.reshape(self.nelem, self.nloc * d)

    # ------------------------------------------------------------------
    def interpolate_scalar(self, values: NDArray) -> tuple[NDArray, NDArray]:
        """Interpolate a nodal scalar field at all quadrature points.

        Returns ``(vals, grads)`` with shapes (nelem, nq) and
        (nelem, nq, dim). Gradients are exact for multilinear fields.
        """
        values = np.asarray(values, dtype=float)
        if values.shape != (self.node_count,):
            raise ValueError(
                f"scalar field must have length {self.node_count}, got {values.shape}"
            )
        nodal = values[self.conn]  # (nelem, nloc)
        vals = nodal @ self.shape_values.T  # (nelem, nq)
        # physical gradients: reference gradient / spacing
        grads = np.einsum("el,qla->eqa", nodal, self.shape_grads) / self.spacings
        return vals, grads

    def interpolate_vector(self, values: NDArray) -> tuple[NDArray, NDArray]:
        """Interpolate a nodal vector field (length dim*node_count).

        Returns ``(vals, grads)`` with shapes (nelem, nq, dim) and
        (nelem, nq, dim, dim); ``grads[..., i, j]`` is du_i/dx_j.
        """
        values = np.asarray(values, dtype=float)
        n = self.node_count * self.dim
        if values.shape != (n,):
            raise ValueError(f"vector field must have length {n}, got {values.shape}")
        nodal = values.reshape(self.node_count, self.dim)[self.conn]  # (e, l, i)
        vals = np.einsum("eli,ql->eqi", nodal, self.shape_values)
        grads = np.einsum("eli,qla->eqia", nodal, self.shape_grads) / self.spacings
        return vals, grads

    def integrate(self, qp_values: NDArray) -> float:
        """Integrate a per-quadrature-point field (nelem, nq) over D."""
        return float(
            np.einsum("eq,q->", qp_values, self.quadrature.weights) * self.element_volume
        )

    def quadrature_coords(self) -> NDArray:
        """(nelem, nq, dim) physical coordinates of all quadrature points."""
        origins = self.node_coords[self.conn[:, 0]]  # (nelem, dim)
        return origins[:, None, :] + self.quadrature.points[None, :, :] * self.spacings


def build_grid(dim: int, cells_per_axis) -> PeriodicGrid:
    """Build a periodic structured grid over [0,1]^dim.

    Parameters
    ----------
    dim : 2 or 3.
    cells_per_axis : sequence of ``dim`` integers, each >= 2.
    """
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    cells = tuple(int(c) for c in cells_per_axis)
    if len(cells) != dim:
        raise ValueError(f"cells_per_axis must have length {dim}, got {len(cells)}")
    if any(c < 2 for c in cells):
        raise ValueError(f"each axis needs at least 2 cells, got {cells}")

    axes = [np.arange(c) for c in cells]
    idx = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    spacings = 1.0 / np.asarray(cells, dtype=float)
    coords = idx * spacings

    nloc = 2**dim
    corner_bits = np.array(
        [[(l >> a) & 1 for a in range(dim)] for l in range(nloc)]
    )  # (nloc, dim)
    # element (i1..id) uses nodes ((i + bits) mod cells)
    conn = np.empty((len(idx), nloc), dtype=np.int64)
    for l, bits in enumerate(corner_bits):
        shifted = (idx + bits) % np.asarray(cells)
        conn[:, l] = np.ravel_multi_index(shifted.T, cells)

    quad = _gauss(dim)
    # Q1 shapes on [0,1]^dim: N_l(x) = prod_a (bits ? x_a : 1-x_a)
    nq = quad.npoints
    vals = np.ones((nq, nloc))
    grads = np.zeros((nq, nloc, dim))
    for l, bits in enumerate(corner_bits):
        for q, x in enumerate(quad.points):
            factors = np.where(bits == 1, x, 1.0 - x)
            vals[q, l] = np.prod(factors)
            for a in range(dim):
                rest = np.prod(np.delete(factors, a))
                grads[q, l, a] = (1.0 if bits[a] == 1 else -1.0) * rest

    return PeriodicGrid(
        dim=dim,
        cells_per_axis=cells,
        conn=conn,
        node_coords=coords,
        quadrature=quad,
        shape_values=vals,
        shape_grads=grads,
    )


def node_index_grid(grid: PeriodicGrid) -> NDArray:
    """Node indices reshaped to the structured (n1, ..., nd) layout."""
    return np.arange(grid.node_count).reshape(grid.cells_per_axis)


def roll_field(grid: PeriodicGrid, values: NDArray, shift) -> NDArray:
    """Translate a nodal field by an integer number of cells along each axis."""
    arr = np.asarray(values).reshape(grid.cells_per_axis)
    return np.roll(arr, shift, axis=tuple(range(grid.dim))).ravel()
